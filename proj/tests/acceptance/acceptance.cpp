// Acceptance runner: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

#include "aoa/aoa.hpp"
#include "aoa/app.hpp"
#include "aoa/attention.hpp"
#include "aoa/data.hpp"
#include "aoa/gradcheck.hpp"
#include "aoa/kernels.hpp"
#include "aoa/metrics.hpp"
#include "aoa/model.hpp"
#include "aoa/ops.hpp"
#include "aoa/training.hpp"
#include "oracles.hpp"

using namespace aoa;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "aoa");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

std::vector<json> read_jsonl(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(r * c);
  for (auto& x : v) x = n(rng);
  return Tensor::matrix(r, c, std::move(v));
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) return false;
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::memcmp(&x[i], &y[i], sizeof(double)) != 0) return false;
  return true;
}

std::vector<CaptionedImage> images_of(std::vector<SyntheticImage> synth) {
  std::vector<CaptionedImage> out;
  for (auto& s : synth) out.push_back(std::move(s.image));
  return out;
}

Vocabulary vocab_of(const std::vector<CaptionedImage>& images) {
  std::vector<Tokens> caps;
  for (const auto& img : images)
    for (const auto& c : img.captions) caps.push_back(tokenize(c));
  return Vocabulary::build(caps, 1);
}

// ---- 1 --------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_gradcheck_suite();
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name, failed;
  for (const auto& r : results) {
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
    if (!r.passed || !(r.max_rel_error < 1e-4)) failed += " " + r.name;
  }
  const bool has_xe = std::any_of(results.begin(), results.end(),
                                  [](const auto& r) { return r.name.rfind("xe_loss", 0) == 0; });
  Outcome o;
  o.pass = failed.empty() && has_xe && secs < 60.0;
  o.detail = std::to_string(results.size()) + " checks, max rel err " + fmt("%.3g", worst) + " (" + worst_name +
             "), " + fmt("%.1f", secs) + " s" + (failed.empty() ? "" : ", failed:" + failed);
  return o;
}

// ---- 2 --------------------------------------------------------------------

Outcome aoa_identities() {
  std::mt19937_64 rng(2);
  const std::size_t D = 8;
  int composed_ok = 0, zero_ok = 0, gate_ok = 0, mh_ok = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    AoAParams p = AoAParams::init(D, rng);
    p.b_i = random_matrix(1, D, rng, 0.1);
    p.b_g = random_matrix(1, D, rng, 0.1);
    p.b_i = reshape(p.b_i, Shape{D});
    p.b_g = reshape(p.b_g, Shape{D});
    const Tensor q = random_matrix(3, D, rng), k = random_matrix(5, D, rng), v = random_matrix(5, D, rng);

    const AoAResult r = aoa::aoa(p, dot_attention, q, k, v);
    const Tensor vhat = dot_attention(q, k, v).output;
    const Tensor info = add(add_row(matmul_nt(q, p.W_i_q), p.b_i), matmul_nt(vhat, p.W_i_v));
    const Tensor gate = sigmoid(add(add_row(matmul_nt(q, p.W_g_q), p.b_g), matmul_nt(vhat, p.W_g_v)));
    if (bit_equal(r.value, elem_mul(gate, info)) && bit_equal(r.gate, gate)) ++composed_ok;

    const AoAResult z = aoa::aoa(AoAParams::zeros(D), dot_attention, q, k, v);
    if (std::all_of(z.value.data().begin(), z.value.data().end(), [](double x) { return x == 0.0; })) ++zero_ok;

    if (std::all_of(r.gate.data().begin(), r.gate.data().end(), [](double g) { return g > 0.0 && g < 1.0; }))
      ++gate_ok;

    const AttentionResult one = multi_head(q, k, v, 1), single = dot_attention(q, k, v);
    if (bit_equal(one.output, single.output) && bit_equal(one.trace.weights, single.trace.weights)) ++mh_ok;
  }
  Outcome o;
  o.pass = composed_ok == trials && zero_ok == trials && gate_ok == trials && mh_ok == trials;
  o.detail = "composed=split " + std::to_string(composed_ok) + "/" + std::to_string(trials) + ", zero params " +
             std::to_string(zero_ok) + "/" + std::to_string(trials) + ", gate in (0,1) " + std::to_string(gate_ok) +
             "/" + std::to_string(trials) + ", H=1 " + std::to_string(mh_ok) + "/" + std::to_string(trials);
  return o;
}

// ---- 3 --------------------------------------------------------------------

Outcome encoder_equivariance() {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  int runs = 0;
  for (EncoderVariant variant : {EncoderVariant::RefineAoA, EncoderVariant::RefineNoAoA}) {
    for (std::size_t n : {0u, 1u, 2u}) {
      if (variant == EncoderVariant::RefineNoAoA && n == 0) continue;
      ModelConfig c;
      c.feature_dim = 10;
      c.model_dim = 8;
      c.vocab_size = 6;
      c.refine_layers = n;
      c.encoder = variant;
      const CaptionModel model = CaptionModel::init(c, 30 + n);
      const std::size_t k = 6;
      const Tensor x = random_matrix(k, c.feature_dim, rng);
      NoGradScope ng;
      const Tensor base = encode(model, x);
      std::vector<std::size_t> perm(k);
      std::iota(perm.begin(), perm.end(), 0);
      for (int p = 0; p < 100; ++p) {
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> px;
        for (std::size_t r : perm)
          for (std::size_t j = 0; j < c.feature_dim; ++j) px.push_back(x.at(r, j));
        const Tensor out = encode(model, Tensor::matrix(k, c.feature_dim, px));
        for (std::size_t r = 0; r < k; ++r)
          for (std::size_t j = 0; j < c.model_dim; ++j)
            worst = std::max(worst, std::abs(out.at(r, j) - base.at(perm[r], j)));
        ++runs;
      }
    }
  }
  return {worst <= 1e-9, std::to_string(runs) + " permutations over N in {0,1,2}, max deviation " + fmt("%.3g", worst)};
}

// ---- 4 --------------------------------------------------------------------

struct OverfitSetup {
  ModelConfig model;
  TrainConfig train;
};

OverfitSetup overfit_setup(const Vocabulary& vocab) {
  OverfitSetup s;
  s.model.feature_dim = 16;
  s.model.model_dim = 64;
  s.model.vocab_size = vocab.size();
  s.train.batch_size = 10;
  s.train.xe_epochs = 120;
  s.train.lr_xe = 2e-3;
  s.train.lr_xe_decay = 0.8;
  s.train.lr_xe_every = 20;
  s.train.ss_increment = 0.0;
  s.train.captions_per_image = 1;
  s.train.max_len = 16;
  s.train.seed = 4;
  return s;
}

Outcome overfit() {
  auto images = images_of(gen_synthetic(41, 50, 6, 16));
  TrainingData data;
  data.train = images;
  data.vocab = vocab_of(images);
  const OverfitSetup s = overfit_setup(data.vocab);
  CaptionModel model = CaptionModel::init(s.model, s.train.seed);

  const auto t0 = std::chrono::steady_clock::now();
  run_training(s.train, model, data, Phase::Xe);
  const double secs = seconds_since(t0);

  NoGradScope ng;
  double nll = 0.0, tokens = 0.0;
  int exact = 0;
  for (const auto& img : images) {
    const auto target = data.vocab.encode(tokenize(img.captions.front()));
    nll += xe_loss(model, img.features, target).item();
    tokens += static_cast<double>(target.size());
    const Tokens greedy = data.vocab.decode(decode_greedy(model, img.features, s.train.max_len));
    for (const auto& ref : reference_tokens(img))
      if (greedy == ref) {
        ++exact;
        break;
      }
  }
  const double loss = nll / tokens;
  const double frac = static_cast<double>(exact) / static_cast<double>(images.size());
  Outcome o;
  o.pass = loss < 0.05 && frac >= 0.9 && secs < 600.0 && s.train.xe_epochs <= 300;
  o.detail = std::to_string(s.train.xe_epochs) + " epochs, per-token XE " + fmt("%.4f", loss) + ", exact " +
             std::to_string(exact) + "/50, " + fmt("%.0f", secs) + " s";
  return o;
}

// ---- 5 --------------------------------------------------------------------

Outcome scst_improvement() {
  auto images = images_of(gen_synthetic(51, 200, 6, 16));
  std::vector<std::string> ids;
  for (const auto& img : images) ids.push_back(img.image_id);
  const DatasetSplit split = split_dataset(ids, 51);
  std::map<std::string, const CaptionedImage*> by_id;
  for (const auto& img : images) by_id[img.image_id] = &img;
  TrainingData data;
  for (const auto& id : split.train) data.train.push_back(*by_id[id]);
  for (const auto& id : split.val) data.val.push_back(*by_id[id]);
  data.vocab = vocab_of(data.train);

  ModelConfig mc;
  mc.feature_dim = 16;
  mc.model_dim = 64;
  mc.vocab_size = data.vocab.size();
  TrainConfig tc;
  tc.xe_epochs = 15;
  tc.scst_epochs = 50;
  tc.lr_xe = 2e-3;
  tc.lr_xe_every = 5;
  tc.ss_increment = 0.0;
  tc.lr_scst = 5e-5;
  tc.max_len = 16;
  tc.seed = 5;

  CaptionModel model = CaptionModel::init(mc, tc.seed);
  const auto t0 = std::chrono::steady_clock::now();
  run_training(tc, model, data, Phase::Xe);
  const double before = evaluate(model, data.vocab, data.train, 1, tc.max_len).cider_d;
  run_training(tc, model, data, Phase::Scst);
  const double after = evaluate(model, data.vocab, data.train, 1, tc.max_len).cider_d;
  const double secs = seconds_since(t0);

  // Ties: constant reward, and natural ties under the CIDEr-D reward.
  std::vector<std::vector<Tokens>> refs;
  for (const auto& img : data.train) refs.push_back(reference_tokens(img));
  const auto stats = CiderCorpusStats::build(refs);
  int ties = 0, zero = 0;
  for (std::size_t i = 0; i < 40; ++i) {
    const auto& img = data.train[i % data.train.size()];
    const auto img_refs = reference_tokens(img);
    RewardFn constant = [](const std::vector<int>&) { return 0.7; };
    RewardFn cider = [&](const std::vector<int>& t) { return cider_d(data.vocab.decode(t), img_refs, stats); };
    std::mt19937_64 rng(900 + i);
    for (const RewardFn* fn : {&constant, &cider}) {
      Tape tape;
      for (const auto& e : model.parameters().entries()) Tensor(e.tensor).zero_grad();
      ScstStep st = scst_step(model, img.features, img.image_id, *fn, tc.max_len, rng);
      if (st.reward_sampled != st.reward_greedy) continue;
      ++ties;
      tape.backward(st.loss);
      bool all_zero = true;
      for (const auto& e : model.parameters().entries())
        for (double g : e.tensor.grad())
          if (g != 0.0) all_zero = false;
      if (all_zero) ++zero;
    }
  }
  Outcome o;
  o.pass = after > before && ties > 0 && zero == ties;
  o.detail = "train CIDEr-D " + fmt("%.4f", before) + " -> " + fmt("%.4f", after) + " after 50 epochs, zero gradient on " +
             std::to_string(zero) + "/" + std::to_string(ties) + " ties, " + fmt("%.0f", secs) + " s";
  return o;
}

// ---- 6 --------------------------------------------------------------------

double relative_distance(const std::vector<double>& got, const std::vector<double>& want) {
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    diff += (got[i] - want[i]) * (got[i] - want[i]);
    norm += want[i] * want[i];
  }
  return std::sqrt(diff / norm);
}

Outcome scst_estimator() {
  // Four tokens (the reserved ones) and at most three decoding steps.
  ModelConfig c;
  c.feature_dim = 3;
  c.model_dim = 4;
  c.vocab_size = 4;
  c.encoder_heads = 1;
  c.decoder_heads = 1;
  c.refine_layers = 1;
  CaptionModel model = CaptionModel::init(c, 6);
  std::mt19937_64 frng(60);
  const Tensor features = random_matrix(2, 3, frng);
  const std::size_t T = 3;
  auto reward = [](const std::vector<int>& t) {
    double r = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) r += (t[i] == 3 ? 1.0 : 0.0) + (t[i] == 0 ? 0.25 * i : 0.0);
    return r + (t.size() == 2 ? 0.5 : 0.0);
  };
  const auto& entries = model.parameters().entries();
  auto zero_grads = [&] {
    for (const auto& e : entries) Tensor(e.tensor).zero_grad();
  };
  auto flat_grads = [&] {
    std::vector<double> g;
    for (const auto& e : entries) g.insert(g.end(), e.tensor.grad().begin(), e.tensor.grad().end());
    return g;
  };

  // Every outcome: up to T-1 non-EOS tokens then EOS, or T non-EOS tokens.
  std::vector<std::vector<int>> outcomes = {{}};
  for (std::size_t len = 1; len <= T; ++len) {
    std::vector<std::vector<int>> next;
    for (const auto& o : outcomes)
      if (o.size() == len - 1)
        for (int tok : {0, 1, 3}) {
          auto x = o;
          x.push_back(tok);
          next.push_back(x);
        }
    outcomes.insert(outcomes.end(), next.begin(), next.end());
  }
  const double baseline = reward(decode_greedy(model, features, T));

  // Exact gradient of E[r], and the exact expectation of the estimator.
  std::vector<double> exact, expected_estimator;
  double total_p = 0.0;
  for (int pass = 0; pass < 2; ++pass) {
    zero_grads();
    Tape tape;
    const DecoderMemory mem = prepare_memory(model, encode(model, features));
    Tensor sum;
    for (const auto& o : outcomes) {
      auto targets = o;
      if (o.size() < T) targets.push_back(token::kEos);
      const Tensor lp = score_sequence(model, mem, targets);
      const double p = std::exp(lp.item());
      if (pass == 0) total_p += p;
      const Tensor term = scale(lp, p * (pass == 0 ? reward(o) : reward(o) - baseline));
      sum = sum.defined() ? add(sum, term) : term;
    }
    tape.backward(sum);
    (pass == 0 ? exact : expected_estimator) = flat_grads();
  }

  auto empirical = [&](int samples, std::size_t stream) {
    std::vector<double> mean(exact.size(), 0.0);
    for (int s = 0; s < samples; ++s) {
      std::mt19937_64 rng = example_rng(6, 9, stream, static_cast<std::size_t>(s));
      zero_grads();
      Tape tape;
      ScstStep st = scst_step(model, features, "toy", reward, T, rng);
      tape.backward(st.loss);
      const auto g = flat_grads();
      for (std::size_t i = 0; i < g.size(); ++i) mean[i] -= g[i] / samples;
    }
    return mean;
  };
  const double rel = relative_distance(empirical(1000, 0), exact);
  const double rel_large = relative_distance(empirical(16000, 1), exact);
  const double bias = relative_distance(expected_estimator, exact);
  Outcome o;
  o.pass = rel < 0.05 && std::abs(total_p - 1.0) < 1e-12;
  o.detail = std::to_string(outcomes.size()) + " outcomes (mass " + fmt("%.12f", total_p) +
             "), 1000 samples, relative error " + fmt("%.4f", rel) + "; 16000 samples " + fmt("%.4f", rel_large) +
             "; enumerated estimator mean vs exact " + fmt("%.2g", bias);
  return o;
}

// ---- 7 --------------------------------------------------------------------

Outcome metrics_oracle() {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<Tokens>> corpus(5);
    for (auto& refs : corpus)
      for (int r = 0; r < 4; ++r) refs.push_back(oracle::random_sentence(rng, 2, 10));
    const auto stats = CiderCorpusStats::build(corpus);
    const auto cand = oracle::random_sentence(rng, 1, 11);
    const auto& refs = corpus[static_cast<std::size_t>(trial) % corpus.size()];
    worst = std::max(worst, std::abs(bleu(cand, refs, 1) - oracle::bleu(cand, refs, 1)));
    worst = std::max(worst, std::abs(bleu(cand, refs, 4) - oracle::bleu(cand, refs, 4)));
    worst = std::max(worst, std::abs(rouge_l(cand, refs) - oracle::rouge_l(cand, refs)));
    worst = std::max(worst, std::abs(cider_d(cand, refs, stats) - oracle::cider_d(cand, refs, corpus)));
  }
  const Tokens s = {"a", "red", "circle", "left", "of", "a", "blue", "square"};
  const auto stats = CiderCorpusStats::build({{s}, {{"two", "green", "stars"}}});
  const double b = bleu(s, {s}), r = rouge_l(s, {s}), cd = cider_d(s, {s}, stats);
  const bool maxima = std::abs(b - 1.0) < 1e-12 && std::abs(r - 1.0) < 1e-12 && std::abs(cd - 10.0) < 1e-9;
  return {worst <= 1e-9 && maxima, "20 cases, max deviation " + fmt("%.3g", worst) + "; maxima B " + fmt("%.12f", b) +
                                       ", R " + fmt("%.12f", r) + ", C " + fmt("%.12f", cd)};
}

// ---- 8 --------------------------------------------------------------------

Outcome schedules(const fs::path& work) {
  const fs::path dir = work / "c8";
  fs::remove_all(dir);
  if (cli({"gen-data", "--seed", "8", "--images", "20", "--out", (dir / "data").string()}).code != 0)
    return {false, "gen-data failed"};
  std::ofstream(dir / "run.cfg") << "data.features = data/features.aoaf\ndata.captions = data/captions.jsonl\n"
                                    "data.split = data/split.json\nvocab.min_count = 1\nmodel.dim = 8\n"
                                    "model.refine_layers = 1\ntrain.xe_epochs = 56\ntrain.scst_epochs = 20\n"
                                    "train.max_len = 10\n";
  const auto r = cli({"train", "--config", (dir / "run.cfg").string(), "--phase", "full", "--out", (dir / "run").string()});
  if (r.code != 0) return {false, "train exited " + std::to_string(r.code) + ": " + r.err};
  const auto log = read_jsonl(slurp(dir / "run" / "log.jsonl"));

  int xe = 0, scst = 0, bad = 0, decays = 0;
  double ss_max = 0.0;
  double lr = 2e-5, best = -1.0;
  bool have_best = false;
  int stale = 0;
  for (const auto& rec : log) {
    const auto e = rec["epoch"].get<std::size_t>();
    const double got_lr = rec["lr"].get<double>();
    if (rec["phase"] == "xe") {
      ++xe;
      double want = 2e-4;
      for (std::size_t i = 0; i < e / 3; ++i) want *= 0.8;
      const double want_ss = std::min(0.5, 0.05 * static_cast<double>(e / 5));
      if (std::abs(got_lr - want) > 1e-15 * want || std::abs(rec["ss_prob"].get<double>() - want_ss) > 1e-15) ++bad;
      ss_max = std::max(ss_max, rec["ss_prob"].get<double>());
    } else {
      ++scst;
      if (std::abs(got_lr - lr) > 1e-15 * lr || rec["ss_prob"].get<double>() != 0.0) ++bad;
      const double c = rec["val"]["C"].get<double>();
      if (!have_best || c > best) {
        best = c;
        have_best = true;
        stale = 0;
      } else if (++stale >= 3) {
        lr *= 0.5;
        stale = 0;
        ++decays;
      }
    }
  }
  Outcome o;
  o.pass = xe == 56 && scst == 20 && bad == 0 && decays > 0 && std::abs(ss_max - 0.5) < 1e-15;
  o.detail = std::to_string(xe) + " XE + " + std::to_string(scst) + " SCST epochs, " + std::to_string(bad) +
             " mismatches, " + std::to_string(decays) + " plateau decays, ss cap " + fmt("%.2f", ss_max);
  return o;
}

// ---- 9 --------------------------------------------------------------------

Outcome ablation(const fs::path& work) {
  const fs::path dir = work / "c9";
  fs::remove_all(dir);
  if (cli({"gen-data", "--seed", "9", "--images", "40", "--out", (dir / "data").string()}).code != 0)
    return {false, "gen-data failed"};
  std::ofstream(dir / "base.cfg") << "data.features = data/features.aoaf\ndata.captions = data/captions.jsonl\n"
                                     "data.split = data/split.json\nvocab.min_count = 1\nmodel.dim = 16\n"
                                     "train.xe_epochs = 3\ntrain.lr_xe = 0.002\ntrain.max_len = 12\n";
  const auto r = cli({"ablate", "--config", (dir / "base.cfg").string(), "--config-matrix", "default", "--out",
                      (dir / "out").string()});
  if (r.code != 0) return {false, "ablate exited " + std::to_string(r.code) + ": " + r.err};
  const auto rows = read_jsonl(r.out);
  const std::vector<std::string> labels = {"base",   "enc-refine-no-aoa", "enc-refine-aoa", "dec-lstm",   "dec-aoa",
                                           "dec-lstm-aoa", "dec-mh",     "dec-mh-lstm",    "dec-mh-aoa", "full"};
  int ok = 0;
  bool refused = false, order = rows.size() == labels.size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (order && rows[i]["label"] != labels[i]) order = false;
    if (rows[i]["status"] == "ok" && std::isfinite(rows[i]["C"].get<double>())) ++ok;
    if (rows[i]["label"] == "dec-lstm-aoa" && rows[i]["status"] == "refused" &&
        rows[i]["reason"].get<std::string>().find("unstable training process") != std::string::npos)
      refused = true;
  }
  const std::string table = slurp(dir / "out" / "ablation.md");
  const auto table_lines = std::count(table.begin(), table.end(), '\n');

  std::ofstream(dir / "exp.matrix") << "lstm-aoa: model.decoder=dec-lstm-aoa model.decoder_heads=1\n";
  const auto e = cli({"ablate", "--config", (dir / "base.cfg").string(), "--config-matrix",
                      (dir / "exp.matrix").string(), "--experimental"});
  const bool experimental_runs = e.code == 0 && read_jsonl(e.out).at(0)["status"] == "ok";

  Outcome o;
  o.pass = order && ok == 9 && refused && table_lines == 12 && experimental_runs;
  o.detail = std::to_string(rows.size()) + " rows, " + std::to_string(ok) + " trained, lstm+aoa " +
             (refused ? "refused" : "NOT refused") + ", table " + std::to_string(table_lines) + " lines, --experimental " +
             (experimental_runs ? "runs" : "fails");
  return o;
}

// ---- 10 -------------------------------------------------------------------

Outcome determinism(const fs::path& work) {
  const fs::path dir = work / "c10";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "run.cfg") << "data.features = data/features.aoaf\ndata.captions = data/captions.jsonl\n"
                                    "data.split = data/split.json\nvocab.min_count = 1\nmodel.dim = 16\n"
                                    "train.xe_epochs = 4\ntrain.scst_epochs = 2\ntrain.lr_xe = 0.002\n"
                                    "train.ss_increment = 0.2\ntrain.ss_every = 1\nmodel.dropout = 0.1\n"
                                    "train.max_len = 10\n";
  std::ofstream(dir / "abl.matrix") << "base: model.encoder=base model.decoder=dec-base\nfull: model.encoder=refine-aoa\n";
  const std::string cfg = (dir / "run.cfg").string(), data = (dir / "data").string(), run = (dir / "run").string();
  const std::vector<std::vector<std::string>> commands = {
      {"--threads", "1", "gen-data", "--seed", "10", "--images", "30", "--out", data},
      {"--threads", "1", "train", "--config", cfg, "--phase", "full", "--out", run},
      {"--threads", "1", "eval", "--ckpt", run + "/scst", "--data", data, "--beam", "3"},
      {"--threads", "1", "caption", "--ckpt", run + "/xe", "--data", data, "--image-id", "img00002", "--trace",
       (dir / "run" / "trace.json").string()},
      {"--threads", "1", "ablate", "--config", cfg, "--config-matrix", (dir / "abl.matrix").string(), "--out",
       (dir / "run" / "ablate").string()},
      {"--threads", "1", "gradcheck"},
  };
  std::vector<std::string> outputs[2];
  std::map<std::string, std::string> files[2];
  for (int pass = 0; pass < 2; ++pass) {
    fs::remove_all(dir / "data");
    fs::remove_all(dir / "run");
    for (const auto& cmd : commands) {
      const auto r = cli(cmd);
      if (r.code != 0) return {false, cmd[2] + " exited " + std::to_string(r.code) + ": " + r.err};
      outputs[pass].push_back(r.out);
    }
    files[pass] = snapshot(dir / "run");
    for (const auto& [name, bytes] : snapshot(dir / "data")) files[pass]["data/" + name] = bytes;
  }
  std::string differing;
  for (std::size_t i = 0; i < commands.size(); ++i)
    if (outputs[0][i] != outputs[1][i]) differing += " stdout:" + commands[i][2];
  for (const auto& [name, bytes] : files[0]) {
    auto it = files[1].find(name);
    if (it == files[1].end() || it->second != bytes) differing += " " + name;
  }
  if (files[0].size() != files[1].size()) differing += " (file sets differ)";
  const bool has_ckpt = files[0].count("scst.bin") && files[0].count("xe.bin");
  Outcome o;
  o.pass = differing.empty() && has_ckpt;
  o.detail = std::to_string(commands.size()) + " commands, " + std::to_string(files[0].size()) + " files compared" +
             (differing.empty() ? ", all byte-identical" : ", differing:" + differing);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "aoa_acceptance";
  std::vector<int> only, known;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--workdir" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      only.push_back(std::stoi(argv[++i]));
    } else if (a == "--known-failure" && i + 1 < argc) {
      known.push_back(std::stoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--workdir DIR] [--only N]... [--known-failure N]...\n";
      return 2;
    }
  }
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"AoA identities", aoa_identities},
      {"encoder permutation equivariance", encoder_equivariance},
      {"overfit run", overfit},
      {"SCST improvement", scst_improvement},
      {"SCST estimator", scst_estimator},
      {"metrics oracle", metrics_oracle},
      {"schedules", [&] { return schedules(work); }},
      {"ablation harness", [&] { return ablation(work); }},
      {"determinism", [&] { return determinism(work); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool excused = std::find(known.begin(), known.end(), id) != known.end();
    if (!o.pass && !excused) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << o.detail
              << (!o.pass && excused ? " [known failure]" : "") << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
