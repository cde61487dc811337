#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "aoa/data.hpp"
#include "aoa/metrics.hpp"
#include "aoa/model.hpp"
#include "aoa/parameters.hpp"

namespace aoa {

struct TrainConfig {
  std::size_t batch_size = 10;
  std::size_t xe_epochs = 30;
  std::size_t scst_epochs = 15;
  double lr_xe = 2e-4;
  double lr_xe_decay = 0.8;
  std::size_t lr_xe_every = 3;
  double lr_scst = 2e-5;
  double lr_scst_decay = 0.5;
  std::size_t plateau_patience = 3;
  double ss_increment = 0.05;
  std::size_t ss_every = 5;
  double ss_cap = 0.5;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  std::size_t max_len = 16;
  std::size_t captions_per_image = 0;  // XE pairs per image; 0 uses all
  std::uint64_t seed = 1;

  void validate() const;
};

// ---- schedules ------------------------------------------------------------

double xe_learning_rate(const TrainConfig& c, std::size_t epoch);
double scheduled_sampling_prob(const TrainConfig& c, std::size_t epoch);

// Multiplies the rate by `factor` after `patience` consecutive observations
// without a strict improvement over the best score, then resets the count.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr, double factor, std::size_t patience);
  double lr() const { return lr_; }
  // Returns the rate to use after this observation.
  double observe(double score);

 private:
  double lr_, factor_;
  std::size_t patience_, stale_ = 0;
  bool seen_ = false;
  double best_ = 0.0;
};

// ---- optimizer ------------------------------------------------------------

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;

  static AdamState init(const ParameterSet& params);
};

void adam_update(AdamState& state, const ParameterSet& params, const GradientBuffers& grads, double lr);

// Scales `grads` so their global L2 norm is at most `max_norm`; returns the
// norm before clipping.
double clip_global_norm(GradientBuffers& grads, double max_norm);

// ---- objectives -----------------------------------------------------------

// Negative log-likelihood of `target` (which must end with EOS) under
// teacher forcing.
Tensor xe_loss(const CaptionModel& model, const Tensor& features, const std::vector<int>& target);
Tensor xe_loss(const CaptionModel& model, const DecoderMemory& memory, const std::vector<int>& target);

// Like xe_loss, but each input after BOS is, with probability ss_prob, a
// token sampled from the model's previous prediction.
Tensor scheduled_sampling_loss(const CaptionModel& model, const DecoderMemory& memory,
                               const std::vector<int>& target, double ss_prob, std::mt19937_64& rng);
Tensor scheduled_sampling_loss(const CaptionModel& model, const Tensor& features,
                               const std::vector<int>& target, double ss_prob, std::mt19937_64& rng);

// -(r_sampled - r_greedy) * log p(y^s).
Tensor scst_pseudo_loss(const Tensor& sample_log_prob, double reward_sampled, double reward_greedy);

using RewardFn = std::function<double(const std::vector<int>& tokens)>;

struct ScstStep {
  Tensor loss;
  double reward_sampled = 0.0;
  double reward_greedy = 0.0;
  std::vector<int> sampled, greedy;
};

// One sampled sequence against the greedy baseline. Reward failures are
// rethrown as DataError naming `image_id`.
ScstStep scst_step(const CaptionModel& model, const Tensor& features, const std::string& image_id,
                   const RewardFn& reward, std::size_t max_len, std::mt19937_64& rng);

// ---- training loop --------------------------------------------------------

enum class Phase { Xe, Scst };
std::string to_string(Phase p);

struct TrainingData {
  std::vector<CaptionedImage> train, val;
  Vocabulary vocab;
};

struct EpochRecord {
  std::size_t epoch = 0;
  Phase phase = Phase::Xe;
  double lr = 0.0;
  double ss_prob = 0.0;
  double train_loss = 0.0;  // XE: per token; SCST: mean pseudo-loss
  double reward_sampled = 0.0;
  double reward_greedy = 0.0;
  std::optional<CorpusReport> val;

  std::string to_json() const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains `model` in place. Per-example gradients within a batch run in
// parallel and are reduced in example order, so results do not depend on
// the thread count. Throws NumericError naming the first non-finite
// parameter gradient.
std::vector<EpochRecord> run_training(const TrainConfig& config, CaptionModel& model,
                                      const TrainingData& data, Phase phase,
                                      const EpochCallback& on_epoch = {});

// Greedy (beam_size 1) or beam decode of every image, scored against its
// references with IDF statistics from the same images.
CorpusReport evaluate(const CaptionModel& model, const Vocabulary& vocab,
                      const std::vector<CaptionedImage>& images, std::size_t beam_size,
                      std::size_t max_len);

// Reference token lists of an image, tokenized.
std::vector<Tokens> reference_tokens(const CaptionedImage& image);

// Deterministic per-example generator derived from the run seed.
std::mt19937_64 example_rng(std::uint64_t seed, std::size_t phase, std::size_t epoch, std::size_t index);

}  // namespace aoa
