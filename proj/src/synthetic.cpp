#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "aoa/data.hpp"
#include "aoa/errors.hpp"

namespace aoa {

const std::vector<std::string>& synthetic_shapes() {
  static const std::vector<std::string> shapes = {"circle", "square", "triangle", "star"};
  return shapes;
}

const std::vector<std::string>& synthetic_colors() {
  static const std::vector<std::string> colors = {"red", "blue", "green", "yellow"};
  return colors;
}

namespace {

constexpr std::size_t kShapeOffset = 0;
constexpr std::size_t kColorOffset = 4;
constexpr std::size_t kColumnOffset = 8;
constexpr std::size_t kRowOffset = 11;
constexpr std::size_t kBackgroundFlag = 14;
constexpr int kGrid = 3;

const char* count_word(std::size_t n) {
  static const char* words[] = {"no", "a", "two", "three"};
  return words[std::min<std::size_t>(n, 3)];
}

const char* row_word(int row) {
  static const char* words[] = {"top", "middle", "bottom"};
  return words[row];
}

const char* column_word(int col) {
  static const char* words[] = {"left", "center", "right"};
  return words[col];
}

std::string group_phrase(std::size_t count, int shape, int color) {
  std::string s = count_word(count);
  s += ' ';
  s += synthetic_colors()[static_cast<std::size_t>(color)];
  s += ' ';
  s += synthetic_shapes()[static_cast<std::size_t>(shape)];
  if (count > 1) s += 's';
  return s;
}

std::string object_phrase(const SceneObject& o) { return group_phrase(1, o.shape, o.color); }

}  // namespace

std::vector<std::string> describe_scene(const SceneSpec& scene) {
  if (scene.objects.empty()) throw ContractError("scene without objects");
  int n_groups = 0;
  for (const auto& o : scene.objects) n_groups = std::max(n_groups, o.group + 1);
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_groups), 0);
  std::vector<const SceneObject*> first(static_cast<std::size_t>(n_groups), nullptr);
  for (const auto& o : scene.objects) {
    auto g = static_cast<std::size_t>(o.group);
    ++counts[g];
    if (!first[g] || o.cell < first[g]->cell) first[g] = &o;
  }

  std::string counting;
  for (std::size_t g = 0; g < counts.size(); ++g) {
    if (g) counting += " and ";
    counting += group_phrase(counts[g], first[g]->shape, first[g]->color);
  }

  std::string spatial;
  const SceneObject& a = *first[0];
  const int ar = a.cell / scene.grid, ac = a.cell % scene.grid;
  if (n_groups >= 2) {
    const SceneObject& b = *first[1];
    const int br = b.cell / scene.grid, bc = b.cell % scene.grid;
    const char* rel = ac < bc ? "left of" : ac > bc ? "right of" : ar < br ? "above" : "below";
    spatial = object_phrase(a) + " " + rel + " " + object_phrase(b);
  } else {
    spatial = object_phrase(a) + " at the " + row_word(ar) + " " + column_word(ac);
  }

  const std::string existential = std::string("there ") + (counts[0] > 1 ? "are " : "is ") + counting;
  return {counting, spatial, existential};
}

std::vector<SyntheticImage> gen_synthetic(std::uint64_t seed, std::size_t n_images, std::size_t k,
                                          std::size_t feature_dim) {
  if (feature_dim < 16) throw ConfigError("synthetic features need D_in >= 16");
  if (k < 1) throw ConfigError("synthetic scenes need k >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  const int n_shapes = static_cast<int>(synthetic_shapes().size());
  const int n_colors = static_cast<int>(synthetic_colors().size());
  const std::size_t max_objects = std::min<std::size_t>(k, kGrid * kGrid);

  std::vector<SyntheticImage> out;
  out.reserve(n_images);
  for (std::size_t i = 0; i < n_images; ++i) {
    SceneSpec scene;
    scene.grid = kGrid;
    const int n_groups = (max_objects >= 2 && std::uniform_int_distribution<int>(0, 1)(rng)) ? 2 : 1;
    std::vector<std::pair<int, int>> kinds;
    while (static_cast<int>(kinds.size()) < n_groups) {
      std::pair<int, int> kind{std::uniform_int_distribution<int>(0, n_shapes - 1)(rng),
                               std::uniform_int_distribution<int>(0, n_colors - 1)(rng)};
      if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) kinds.push_back(kind);
    }
    std::vector<std::size_t> counts;
    std::size_t budget = max_objects;
    for (int g = 0; g < n_groups; ++g) {
      const std::size_t reserve_rest = static_cast<std::size_t>(n_groups - g - 1);
      const std::size_t hi = std::min<std::size_t>(3, budget - reserve_rest);
      const std::size_t c = std::uniform_int_distribution<std::size_t>(1, hi)(rng);
      counts.push_back(c);
      budget -= c;
    }
    std::vector<int> cells(kGrid * kGrid);
    std::iota(cells.begin(), cells.end(), 0);
    std::shuffle(cells.begin(), cells.end(), rng);
    std::size_t next_cell = 0;
    for (int g = 0; g < n_groups; ++g) {
      for (std::size_t c = 0; c < counts[static_cast<std::size_t>(g)]; ++c) {
        scene.objects.push_back(SceneObject{kinds[static_cast<std::size_t>(g)].first,
                                            kinds[static_cast<std::size_t>(g)].second,
                                            cells[next_cell++], g});
      }
    }

    // Feature rows: objects in shuffled order, background rows after.
    std::vector<std::size_t> order(scene.objects.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> feats(k * feature_dim, 0.0);
    for (std::size_t r = 0; r < k; ++r) {
      double* row = feats.data() + r * feature_dim;
      if (r < order.size()) {
        const SceneObject& o = scene.objects[order[r]];
        row[kShapeOffset + static_cast<std::size_t>(o.shape)] = 1.0;
        row[kColorOffset + static_cast<std::size_t>(o.color)] = 1.0;
        row[kColumnOffset + static_cast<std::size_t>(o.cell % kGrid)] = 1.0;
        row[kRowOffset + static_cast<std::size_t>(o.cell / kGrid)] = 1.0;
      } else {
        row[kBackgroundFlag] = 1.0;
      }
      for (std::size_t c = 0; c < feature_dim; ++c)
        row[c] = static_cast<double>(static_cast<float>(row[c] + noise(rng)));
    }

    char id[32];
    std::snprintf(id, sizeof id, "img%05zu", i);
    SyntheticImage img;
    img.scene = scene;
    img.image.image_id = id;
    img.image.features = Tensor(Shape{k, feature_dim}, std::move(feats));
    img.image.captions = describe_scene(scene);
    out.push_back(std::move(img));
  }
  return out;
}

DatasetSplit split_dataset(const std::vector<std::string>& image_ids, std::uint64_t seed,
                           double train_fraction, double val_fraction) {
  if (train_fraction < 0 || val_fraction < 0 || train_fraction + val_fraction > 1.0) {
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  }
  std::vector<std::string> ids = image_ids;
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n = static_cast<double>(ids.size());
  const auto n_train = static_cast<std::size_t>(std::llround(n * train_fraction));
  const auto n_val = std::min(ids.size() - n_train, static_cast<std::size_t>(std::llround(n * val_fraction)));
  DatasetSplit s;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
               ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  return s;
}

}  // namespace aoa
