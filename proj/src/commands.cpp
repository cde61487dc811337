#include "aoa/app.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "aoa/config.hpp"
#include "aoa/data.hpp"
#include "aoa/errors.hpp"
#include "aoa/gradcheck.hpp"
#include "aoa/kernels.hpp"
#include "aoa/training.hpp"

namespace aoa::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// 64-bit FNV-1a over the bytes of each file, in order.
std::string content_hash(const std::vector<fs::path>& files) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw DataError("cannot open " + f.string());
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
      for (std::streamsize i = 0; i < in.gcount(); ++i) {
        h ^= static_cast<unsigned char>(buf[i]);
        h *= 1099511628211ull;
      }
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

struct Dataset {
  std::vector<CaptionedImage> images;
  DatasetSplit split;
  fs::path features, captions, split_file;

  std::vector<CaptionedImage> subset(const std::vector<std::string>& ids) const {
    std::map<std::string, const CaptionedImage*> by_id;
    for (const auto& img : images) by_id[img.image_id] = &img;
    std::vector<CaptionedImage> out;
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError(split_file.string() + ": unknown image id " + id);
      out.push_back(*it->second);
    }
    return out;
  }

  std::vector<CaptionedImage> named(const std::string& which) const {
    if (which == "train") return subset(split.train);
    if (which == "val") return subset(split.val);
    if (which == "test") return subset(split.test);
    if (which == "all") return images;
    throw ConfigError("unknown split '" + which + "' (train | val | test | all)");
  }
};

Dataset load_files(const fs::path& features, const fs::path& captions, const fs::path& split) {
  Dataset d;
  d.features = features;
  d.captions = captions;
  d.split_file = split;
  d.images = load_dataset(features, captions);
  d.split = read_split(split);
  return d;
}

Dataset load_dir(const fs::path& dir) {
  return load_files(dir / "features.aoaf", dir / "captions.jsonl", dir / "split.json");
}

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

Dataset load_for_config(const RunConfig& c, const fs::path& config_dir) {
  return load_files(resolve(config_dir, c.features), resolve(config_dir, c.captions),
                    resolve(config_dir, c.split));
}

Vocabulary build_vocab(const std::vector<CaptionedImage>& train, std::size_t min_count) {
  std::vector<Tokens> caps;
  for (const auto& img : train)
    for (const auto& c : img.captions) caps.push_back(tokenize(c));
  return Vocabulary::build(caps, min_count);
}

ModelConfig model_config_for(const RunConfig& c, const Dataset& d, const Vocabulary& vocab) {
  ModelConfig m = c.model;
  m.feature_dim = d.images.empty() ? 0 : d.images.front().features.cols();
  m.vocab_size = vocab.size();
  m.validate();
  return m;
}

// ---- gen-data -------------------------------------------------------------

struct GenDataArgs {
  std::uint64_t seed = 1;
  std::size_t images = 200;
  std::size_t k = 6;
  std::size_t dim = 16;
  std::string out = "data";
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  auto synth = gen_synthetic(a.seed, a.images, a.k, a.dim);
  std::vector<CaptionedImage> images;
  std::vector<std::string> ids;
  for (auto& s : synth) {
    ids.push_back(s.image.image_id);
    images.push_back(std::move(s.image));
  }
  const fs::path dir(a.out);
  write_features(dir / "features.aoaf", images);
  write_captions(dir / "captions.jsonl", images);
  const DatasetSplit split = split_dataset(ids, a.seed);
  write_split(dir / "split.json", split);
  ojson j;
  j["features"] = (dir / "features.aoaf").string();
  j["captions"] = (dir / "captions.jsonl").string();
  j["split"] = (dir / "split.json").string();
  j["images"] = images.size();
  j["train"] = split.train.size();
  j["val"] = split.val.size();
  j["test"] = split.test.size();
  out << j.dump() << '\n';
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string phase = "xe";
  std::string out = "run";
  std::string init;
  std::vector<std::string> overrides;
  bool experimental = false;
  bool print_config = false;
};

RunConfig resolve_config(const std::string& file, const std::vector<std::string>& overrides,
                         bool experimental) {
  RunConfig c = file.empty() ? RunConfig{} : load_config(file);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (experimental) c.model.experimental = true;
  return c;
}

fs::path config_dir(const std::string& file) {
  return file.empty() ? fs::path() : fs::path(file).parent_path();
}

int train(const TrainArgs& a, std::ostream& out) {
  RunConfig c = resolve_config(a.config, a.overrides, a.experimental);
  if (a.print_config) {
    out << dump_config(c);
    return kExitOk;
  }
  if (a.phase != "xe" && a.phase != "scst" && a.phase != "full") {
    throw ConfigError("unknown phase '" + a.phase + "' (xe | scst | full)");
  }
  c.train.validate();
  const fs::path cdir = config_dir(a.config);
  Dataset data = load_for_config(c, cdir);
  const fs::path dir(a.out);
  fs::create_directories(dir);

  TrainingData td;
  td.train = data.subset(data.split.train);
  td.val = data.subset(data.split.val);

  CaptionModel model;
  if (a.phase == "scst") {
    if (c.init.empty() && a.init.empty()) throw ConfigError("--phase scst needs init = <checkpoint> or --init");
    Checkpoint ck = read_checkpoint(a.init.empty() ? resolve(cdir, c.init) : fs::path(a.init));
    model = std::move(ck.model);
    td.vocab = std::move(ck.vocab);
    if (model.config().feature_dim != data.images.front().features.cols()) {
      throw DataError("checkpoint expects D_in " + std::to_string(model.config().feature_dim));
    }
  } else {
    td.vocab = build_vocab(td.train, c.vocab_min_count);
    model = CaptionModel::init(model_config_for(c, data, td.vocab), c.seed);
  }

  write_text(dir / "config.txt", dump_config(c));
  std::ofstream log(dir / "log.jsonl", std::ios::binary | std::ios::trunc);
  if (!log) throw DataError("cannot write " + (dir / "log.jsonl").string());
  auto on_epoch = [&](const EpochRecord& r) {
    const std::string line = r.to_json();
    log << line << '\n';
    log.flush();
    out << line << '\n';
  };

  std::vector<std::string> outputs = {(dir / "config.txt").string(), (dir / "log.jsonl").string()};
  if (a.phase == "xe" || a.phase == "full") {
    run_training(c.train, model, td, Phase::Xe, on_epoch);
    write_checkpoint(dir / "xe", model, td.vocab);
    outputs.push_back((dir / "xe.json").string());
    if (a.phase == "full") {
      Checkpoint ck = read_checkpoint(dir / "xe");
      model = std::move(ck.model);
      td.vocab = std::move(ck.vocab);
    }
  }
  if (a.phase == "scst" || a.phase == "full") {
    run_training(c.train, model, td, Phase::Scst, on_epoch);
    write_checkpoint(dir / "scst", model, td.vocab);
    outputs.push_back((dir / "scst.json").string());
  }

  ojson m;
  m["phase"] = a.phase;
  m["seed"] = c.seed;
  m["config"] = dump_config(c);
  m["inputs"] = {data.features.string(), data.captions.string(), data.split_file.string()};
  m["input_hash"] = content_hash({data.features, data.captions, data.split_file});
  m["outputs"] = outputs;
  write_text(dir / "manifest.json", m.dump(1) + "\n");
  return kExitOk;
}

// ---- eval and caption -----------------------------------------------------

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  std::size_t beam = 3;
  std::size_t max_len = 16;
};

int eval(const EvalArgs& a, std::ostream& out) {
  Checkpoint ck = read_checkpoint(a.ckpt);
  Dataset d = load_dir(a.data);
  const auto images = d.named(a.split);
  if (images.empty()) throw DataError("split '" + a.split + "' is empty");
  const CorpusReport r = evaluate(ck.model, ck.vocab, images, a.beam, a.max_len);
  out << r.to_json() << '\n';
  return kExitOk;
}

struct CaptionArgs {
  std::string ckpt;
  std::string data;
  std::string image_id;
  std::string trace;
  std::size_t beam = 1;
  std::size_t max_len = 16;
};

ojson matrix_json(const Tensor& t) {
  ojson rows = ojson::array();
  const std::size_t n = t.cols();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    ojson row = ojson::array();
    for (std::size_t c = 0; c < n; ++c) row.push_back(t.at(r, c));
    rows.push_back(row);
  }
  return rows;
}

int caption(const CaptionArgs& a, std::ostream& out) {
  Checkpoint ck = read_checkpoint(a.ckpt);
  Dataset d = load_dir(a.data);
  const CaptionedImage* img = nullptr;
  for (const auto& i : d.images)
    if (i.image_id == a.image_id) img = &i;
  if (!img) throw DataError("image " + a.image_id + " not found in " + a.data);
  if (img->features.cols() != ck.model.config().feature_dim) {
    throw DataError("image " + a.image_id + " has D_in " + std::to_string(img->features.cols()) +
                    ", checkpoint expects " + std::to_string(ck.model.config().feature_dim));
  }

  const auto ids = a.beam <= 1 ? decode_greedy(ck.model, img->features, a.max_len)
                               : decode_beam(ck.model, img->features, a.beam, a.max_len);
  out << detokenize(ck.vocab.decode(ids)) << '\n';

  if (!a.trace.empty()) {
    const auto steps = decode_greedy_traced(ck.model, img->features, a.max_len);
    const std::size_t groups = ck.model.config().decoder_heads;
    ojson j;
    j["image_id"] = a.image_id;
    j["decoder"] = to_string(ck.model.config().decoder);
    j["gate_groups"] = groups;
    ojson arr = ojson::array();
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const auto& s = steps[t];
      ojson st;
      st["t"] = t;
      st["token"] = s.token;
      st["word"] = ck.vocab.word(s.token);
      st["attention"] = matrix_json(s.trace.weights);
      ojson heads = ojson::array();
      for (const auto& h : s.trace.heads) heads.push_back(matrix_json(h));
      st["heads"] = heads;
      if (s.gate.defined()) {
        const auto g = s.gate.data();
        const std::size_t width = g.size() / groups;
        ojson means = ojson::array();
        for (std::size_t b = 0; b < groups; ++b) {
          double acc = 0.0;
          for (std::size_t c = b * width; c < (b + 1) * width; ++c) acc += g[c];
          means.push_back(acc / static_cast<double>(width));
        }
        st["gate_means"] = means;
      } else {
        st["gate_means"] = nullptr;
      }
      arr.push_back(st);
    }
    j["steps"] = arr;
    write_text(a.trace, j.dump(1) + "\n");
  }
  return kExitOk;
}

// ---- ablate ---------------------------------------------------------------

struct AblateArgs {
  std::string config;
  std::string matrix;
  std::string out;
  std::vector<std::string> overrides;
  bool experimental = false;
};

struct MatrixRow {
  std::string label;
  std::vector<std::pair<std::string, std::string>> settings;
};

std::vector<MatrixRow> parse_matrix(const std::string& text) {
  std::vector<MatrixRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ConfigError("matrix line " + std::to_string(no) + ": expected 'label: key=value ...'");
    MatrixRow row;
    std::istringstream label(line.substr(0, colon));
    label >> row.label;
    std::istringstream kvs(line.substr(colon + 1));
    std::string kv;
    while (kvs >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("matrix line " + std::to_string(no) + ": '" + kv + "' is not key=value");
      row.settings.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (row.label.empty()) throw ConfigError("matrix line " + std::to_string(no) + ": empty label");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("config matrix has no rows");
  return rows;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

int ablate(const AblateArgs& a, std::ostream& out) {
  const RunConfig base = resolve_config(a.config, a.overrides, a.experimental);
  const auto rows = parse_matrix(a.matrix == "default" ? default_ablation_matrix() : read_text(a.matrix));
  Dataset data = load_for_config(base, config_dir(a.config));
  TrainingData td;
  td.train = data.subset(data.split.train);
  td.val = data.subset(data.split.val);
  const auto test = data.subset(data.split.test.empty() ? data.split.val : data.split.test);
  td.vocab = build_vocab(td.train, base.vocab_min_count);

  std::string jsonl;
  std::string table = "| row | encoder | decoder | heads | B1 | B4 | R | C |\n|---|---|---|---|---|---|---|---|\n";
  for (const auto& row : rows) {
    RunConfig c = base;
    for (const auto& [k, v] : row.settings) set_config_value(c, k, v);
    if (a.experimental) c.model.experimental = true;
    ojson j;
    j["label"] = row.label;
    j["encoder"] = to_string(c.model.encoder);
    j["decoder"] = to_string(c.model.decoder);
    j["decoder_heads"] = c.model.decoder_heads;
    std::string cells;
    try {
      ModelConfig mc = model_config_for(c, data, td.vocab);
      CaptionModel model = CaptionModel::init(mc, c.seed);
      run_training(c.train, model, td, Phase::Xe);
      const CorpusReport r = evaluate(model, td.vocab, test, c.eval_beam, c.train.max_len);
      j["status"] = "ok";
      j["B1"] = r.bleu1;
      j["B4"] = r.bleu4;
      j["R"] = r.rouge_l;
      j["C"] = r.cider_d;
      cells = format_score(r.bleu1) + " | " + format_score(r.bleu4) + " | " + format_score(r.rouge_l) +
              " | " + format_score(r.cider_d);
    } catch (const ConfigError& e) {
      j["status"] = "refused";
      j["reason"] = e.what();
      cells = "refused: unstable training process | | | ";
    }
    const std::string line = j.dump();
    out << line << '\n';
    jsonl += line + "\n";
    table += "| " + row.label + " | " + to_string(c.model.encoder) + " | " + to_string(c.model.decoder) + " | " +
             std::to_string(c.model.decoder_heads) + " | " + cells + " |\n";
  }
  if (!a.out.empty()) {
    write_text(fs::path(a.out) / "ablation.jsonl", jsonl);
    write_text(fs::path(a.out) / "ablation.md", table);
  }
  return kExitOk;
}

// ---- gradcheck ------------------------------------------------------------

int gradcheck(std::ostream& out) {
  const auto results = run_gradcheck_suite();
  bool ok = true;
  for (const auto& r : results) {
    ojson j;
    j["name"] = r.name;
    j["checked"] = r.checked;
    j["max_rel_error"] = r.max_rel_error;
    j["passed"] = r.passed;
    out << j.dump() << '\n';
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitNumeric;
}

}  // namespace

std::string default_ablation_matrix() {
  return "base: model.encoder=base model.decoder=dec-base model.decoder_heads=1\n"
         "enc-refine-no-aoa: model.encoder=refine-no-aoa model.decoder=dec-base model.decoder_heads=1\n"
         "enc-refine-aoa: model.encoder=refine-aoa model.decoder=dec-base model.decoder_heads=1\n"
         "dec-lstm: model.encoder=base model.decoder=dec-lstm model.decoder_heads=1\n"
         "dec-aoa: model.encoder=base model.decoder=dec-aoa model.decoder_heads=1\n"
         "dec-lstm-aoa: model.encoder=base model.decoder=dec-lstm-aoa model.decoder_heads=1\n"
         "dec-mh: model.encoder=base model.decoder=dec-base\n"
         "dec-mh-lstm: model.encoder=base model.decoder=dec-lstm\n"
         "dec-mh-aoa: model.encoder=base model.decoder=dec-aoa\n"
         "full: model.encoder=refine-aoa model.decoder=dec-aoa\n";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention-on-Attention captioning toolkit", "aoa"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0 keeps the OpenMP default)")->check(CLI::NonNegativeNumber);

  GenDataArgs gd;
  auto* c_gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  c_gen->add_option("--seed", gd.seed);
  c_gen->add_option("--images", gd.images)->check(CLI::PositiveNumber);
  c_gen->add_option("--k", gd.k)->check(CLI::PositiveNumber);
  c_gen->add_option("--dim", gd.dim);
  c_gen->add_option("--out", gd.out);

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a model");
  c_train->add_option("--config", tr.config);
  c_train->add_option("--phase", tr.phase)->check(CLI::IsMember({"xe", "scst", "full"}));
  c_train->add_option("--out", tr.out);
  c_train->add_option("--init", tr.init, "checkpoint for --phase scst");
  c_train->add_option("--set", tr.overrides, "key=value override");
  c_train->add_flag("--experimental", tr.experimental);
  c_train->add_flag("--print-config", tr.print_config);

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "score a checkpoint");
  c_eval->add_option("--ckpt", ev.ckpt)->required();
  c_eval->add_option("--data", ev.data)->required();
  c_eval->add_option("--split", ev.split);
  c_eval->add_option("--beam", ev.beam)->check(CLI::PositiveNumber);
  c_eval->add_option("--max-len", ev.max_len)->check(CLI::PositiveNumber);

  CaptionArgs ca;
  auto* c_cap = app.add_subcommand("caption", "caption one image");
  c_cap->add_option("--ckpt", ca.ckpt)->required();
  c_cap->add_option("--data", ca.data)->required();
  c_cap->add_option("--image-id", ca.image_id)->required();
  c_cap->add_option("--trace", ca.trace);
  c_cap->add_option("--beam", ca.beam)->check(CLI::PositiveNumber);
  c_cap->add_option("--max-len", ca.max_len)->check(CLI::PositiveNumber);

  AblateArgs ab;
  auto* c_ab = app.add_subcommand("ablate", "train and score a matrix of configurations");
  c_ab->add_option("--config", ab.config);
  c_ab->add_option("--config-matrix", ab.matrix, "matrix file, or 'default'")->required();
  c_ab->add_option("--out", ab.out);
  c_ab->add_option("--set", ab.overrides, "key=value override");
  c_ab->add_flag("--experimental", ab.experimental);

  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (threads > 0) kernels::set_num_threads(threads);
    if (*c_gen) return gen_data(gd, out);
    if (*c_train) return train(tr, out);
    if (*c_eval) return eval(ev, out);
    if (*c_cap) return caption(ca, out);
    if (*c_ab) return ablate(ab, out);
    if (*c_grad) return gradcheck(out);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::logic_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitConfig;
}

}  // namespace aoa::cli
