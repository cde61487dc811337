#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "aoa/metrics.hpp"
#include "aoa/model.hpp"
#include "aoa/tensor.hpp"

namespace aoa {

// ---- vocabulary -----------------------------------------------------------

// Indices 0..3 are PAD, BOS, EOS, UNK; the rest follow frequency descending,
// then lexicographic order.
class Vocabulary {
 public:
  Vocabulary();
  static Vocabulary build(const std::vector<Tokens>& captions, std::size_t min_count = 5);
  // Rebuilds from the full index-ordered word list (reserved names included).
  static Vocabulary from_words(const std::vector<std::string>& words);

  std::size_t size() const { return words_.size(); }
  int index(const std::string& word) const;  // UNK when absent
  bool contains(const std::string& word) const { return lookup_.count(word) > 0; }
  const std::string& word(int index) const;
  const std::vector<std::string>& words() const { return words_; }

  // Token ids of the caption, terminated by EOS.
  std::vector<int> encode(const Tokens& tokens) const;
  // Stops at EOS; skips PAD and BOS.
  Tokens decode(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> lookup_;
};

// ---- synthetic scenes -----------------------------------------------------

struct SceneObject {
  int shape;  // index into synthetic_shapes()
  int color;  // index into synthetic_colors()
  int cell;   // row-major cell in a grid x grid layout
  int group;  // objects of one group share shape and color
};

struct SceneSpec {
  std::vector<SceneObject> objects;
  int grid = 3;
};

const std::vector<std::string>& synthetic_shapes();
const std::vector<std::string>& synthetic_colors();

struct CaptionedImage {
  std::string image_id;
  Tensor features;  // k x D_in
  std::vector<std::string> captions;
};

struct SyntheticImage {
  CaptionedImage image;
  SceneSpec scene;
};

// Feature row layout: one-hot shape [0,4), color [4,8), column [8,11),
// row [11,14), background flag [14]; remaining channels carry only noise.
// Gaussian noise (std 0.05) is added everywhere and values are rounded to
// float32 so that the feature file stores them exactly.
std::vector<SyntheticImage> gen_synthetic(std::uint64_t seed, std::size_t n_images, std::size_t k,
                                          std::size_t feature_dim);

// Three reference captions for a scene: counting, spatial and existential.
std::vector<std::string> describe_scene(const SceneSpec& scene);

struct DatasetSplit {
  std::vector<std::string> train, val, test;
};

// Seeded shuffle then 80/10/10 assignment.
DatasetSplit split_dataset(const std::vector<std::string>& image_ids, std::uint64_t seed,
                           double train_fraction = 0.8, double val_fraction = 0.1);

// ---- file formats ---------------------------------------------------------

// .aoaf: "AOAF", u16 version = 1, u32 image count, then per image
// u16 id length, UTF-8 id, u32 k, u32 D_in, k*D_in float32; little-endian.
void write_features(const std::filesystem::path& path, const std::vector<CaptionedImage>& images);
// Returns images with captions left empty.
std::vector<CaptionedImage> read_features(const std::filesystem::path& path);

// JSON lines: {"image_id": "...", "captions": ["...", ...]}
void write_captions(const std::filesystem::path& path, const std::vector<CaptionedImage>& images);
std::map<std::string, std::vector<std::string>> read_captions(const std::filesystem::path& path);

void write_split(const std::filesystem::path& path, const DatasetSplit& split);
DatasetSplit read_split(const std::filesystem::path& path);

// Features joined with captions, in feature-file order.
std::vector<CaptionedImage> load_dataset(const std::filesystem::path& features,
                                         const std::filesystem::path& captions);

// Checkpoint: <prefix>.json manifest (config, vocabulary, ordered tensor
// list with name, shape and byte offset) and <prefix>.bin float32 blob.
struct Checkpoint {
  CaptionModel model;
  Vocabulary vocab;
};

void write_checkpoint(const std::filesystem::path& prefix, const CaptionModel& model,
                      const Vocabulary& vocab);
// Accepts the prefix or the manifest path.
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace aoa
