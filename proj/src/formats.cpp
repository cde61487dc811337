#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "aoa/data.hpp"
#include "aoa/errors.hpp"

namespace aoa {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

class ByteWriter {
 public:
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f32(float f) { put(std::bit_cast<std::uint32_t>(f), 4); }
  void bytes(const std::string& s) { out_ += s; }
  const std::string& str() const { return out_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(const std::string& data, std::string what) : d_(data), what_(std::move(what)) {}
  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == d_.size(); }

  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(get(4))); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = d_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (d_.size() - pos_ < n) {
      throw TruncationError(what_ + ": truncated, needed " + std::to_string(n) + " more bytes", pos_);
    }
  }

 private:
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(d_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::string& d_;
  std::string what_;
  std::size_t pos_ = 0;
};

constexpr char kFeatureMagic[4] = {'A', 'O', 'A', 'F'};
constexpr std::uint16_t kFeatureVersion = 1;

}  // namespace

// ---- features -------------------------------------------------------------

void write_features(const fs::path& path, const std::vector<CaptionedImage>& images) {
  ByteWriter w;
  w.bytes(std::string(kFeatureMagic, 4));
  w.u16(kFeatureVersion);
  w.u32(static_cast<std::uint32_t>(images.size()));
  for (const auto& img : images) {
    if (img.image_id.size() > 0xffff) throw DataError("image id too long: " + img.image_id.substr(0, 32));
    if (img.features.rank() != 2 || img.features.rows() == 0 || img.features.cols() == 0) {
      throw DataError("features of " + img.image_id + " must be a non-empty matrix");
    }
    w.u16(static_cast<std::uint16_t>(img.image_id.size()));
    w.bytes(img.image_id);
    w.u32(static_cast<std::uint32_t>(img.features.rows()));
    w.u32(static_cast<std::uint32_t>(img.features.cols()));
    for (double v : img.features.data()) w.f32(static_cast<float>(v));
  }
  write_file(path, w.str());
}

std::vector<CaptionedImage> read_features(const fs::path& path) {
  const std::string data = read_file(path);
  ByteReader r(data, path.string());
  if (data.size() < 4 || std::memcmp(data.data(), kFeatureMagic, 4) != 0) {
    throw MagicError(path.string() + ": bad magic, expected AOAF", 0);
  }
  r.bytes(4);
  const std::size_t version_at = r.offset();
  const std::uint16_t version = r.u16();
  if (version != kFeatureVersion) {
    throw VersionError(path.string() + ": unsupported version " + std::to_string(version), version_at);
  }
  const std::uint32_t count = r.u32();
  std::vector<CaptionedImage> out;
  std::size_t feature_dim = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    CaptionedImage img;
    const std::uint16_t id_len = r.u16();
    img.image_id = r.bytes(id_len);
    const std::size_t shape_at = r.offset();
    const std::uint32_t k = r.u32();
    const std::uint32_t d = r.u32();
    if (k == 0 || d == 0) {
      throw ShapeMismatchError(path.string() + ": image " + img.image_id + " has empty shape " +
                                   std::to_string(k) + "x" + std::to_string(d),
                               shape_at);
    }
    if (feature_dim == 0) feature_dim = d;
    if (d != feature_dim) {
      throw ShapeMismatchError(path.string() + ": image " + img.image_id + " has D_in " +
                                   std::to_string(d) + " but earlier images have " +
                                   std::to_string(feature_dim),
                               shape_at);
    }
    r.need(static_cast<std::size_t>(k) * d * 4);
    std::vector<double> v(static_cast<std::size_t>(k) * d);
    for (auto& x : v) x = static_cast<double>(r.f32());
    img.features = Tensor(Shape{k, d}, std::move(v));
    out.push_back(std::move(img));
  }
  if (!r.at_end()) {
    throw ShapeMismatchError(path.string() + ": trailing bytes after " + std::to_string(count) + " images",
                             r.offset());
  }
  return out;
}

// ---- captions and splits --------------------------------------------------

void write_captions(const fs::path& path, const std::vector<CaptionedImage>& images) {
  std::string out;
  for (const auto& img : images) {
    ojson j;
    j["image_id"] = img.image_id;
    j["captions"] = img.captions;
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::map<std::string, std::vector<std::string>> read_captions(const fs::path& path) {
  const std::string data = read_file(path);
  std::map<std::string, std::vector<std::string>> out;
  std::size_t pos = 0;
  while (pos < data.size()) {
    std::size_t end = data.find('\n', pos);
    if (end == std::string::npos) end = data.size();
    const std::string line = data.substr(pos, end - pos);
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      try {
        auto j = nlohmann::json::parse(line);
        auto id = j.at("image_id").get<std::string>();
        auto caps = j.at("captions").get<std::vector<std::string>>();
        if (out.count(id)) throw DataError(path.string() + ": duplicate image_id " + id, pos);
        out.emplace(std::move(id), std::move(caps));
      } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": malformed caption record: " + e.what(), pos);
      }
    }
    pos = end + 1;
  }
  return out;
}

void write_split(const fs::path& path, const DatasetSplit& split) {
  ojson j;
  j["train"] = split.train;
  j["val"] = split.val;
  j["test"] = split.test;
  write_file(path, j.dump() + "\n");
}

DatasetSplit read_split(const fs::path& path) {
  try {
    auto j = nlohmann::json::parse(read_file(path));
    DatasetSplit s;
    s.train = j.at("train").get<std::vector<std::string>>();
    s.val = j.at("val").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    return s;
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": malformed split file: " + e.what(), e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed split file: " + e.what(), 0);
  }
}

std::vector<CaptionedImage> load_dataset(const fs::path& features, const fs::path& captions) {
  auto images = read_features(features);
  auto caps = read_captions(captions);
  for (auto& img : images) {
    auto it = caps.find(img.image_id);
    if (it == caps.end() || it->second.empty()) {
      throw DataError(captions.string() + ": no captions for image " + img.image_id);
    }
    img.captions = it->second;
  }
  return images;
}

// ---- checkpoints ----------------------------------------------------------

std::string model_config_to_json(const ModelConfig& c) {
  ojson j;
  j["feature_dim"] = c.feature_dim;
  j["model_dim"] = c.model_dim;
  j["embed_dim"] = c.embed_dim;
  j["vocab_size"] = c.vocab_size;
  j["encoder_heads"] = c.encoder_heads;
  j["decoder_heads"] = c.decoder_heads;
  j["refine_layers"] = c.refine_layers;
  j["ff_dim"] = c.ff_dim;
  j["encoder"] = to_string(c.encoder);
  j["decoder"] = to_string(c.decoder);
  j["experimental"] = c.experimental;
  j["dropout"] = c.dropout;
  j["ln_eps"] = c.ln_eps;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  ModelConfig c;
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.model_dim = j.at("model_dim").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.encoder_heads = j.at("encoder_heads").get<std::size_t>();
  c.decoder_heads = j.at("decoder_heads").get<std::size_t>();
  c.refine_layers = j.at("refine_layers").get<std::size_t>();
  c.ff_dim = j.at("ff_dim").get<std::size_t>();
  c.encoder = parse_encoder_variant(j.at("encoder").get<std::string>());
  c.decoder = parse_decoder_scheme(j.at("decoder").get<std::string>());
  c.experimental = j.at("experimental").get<bool>();
  c.dropout = j.at("dropout").get<double>();
  c.ln_eps = j.at("ln_eps").get<double>();
  return c;
}

namespace {

fs::path manifest_path(const fs::path& p) {
  if (p.extension() == ".json") return p;
  fs::path m = p;
  m += ".json";
  return m;
}

}  // namespace

void write_checkpoint(const fs::path& prefix, const CaptionModel& model, const Vocabulary& vocab) {
  const fs::path manifest = manifest_path(prefix);
  fs::path blob = manifest;
  blob.replace_extension(".bin");

  ByteWriter w;
  ojson tensors = ojson::array();
  for (const auto& e : model.parameters().entries()) {
    ojson t;
    t["name"] = e.name;
    t["shape"] = e.tensor.shape().dims();
    t["offset"] = w.str().size();
    tensors.push_back(t);
    for (double v : e.tensor.data()) w.f32(static_cast<float>(v));
  }
  ojson j;
  j["format"] = "aoa-checkpoint";
  j["version"] = 1;
  j["blob"] = blob.filename().string();
  j["blob_bytes"] = w.str().size();
  j["config"] = ojson::parse(model_config_to_json(model.config()));
  j["vocab"] = vocab.words();
  j["tensors"] = tensors;
  write_file(blob, w.str());
  write_file(manifest, j.dump(1) + "\n");
}

Checkpoint read_checkpoint(const fs::path& path) {
  const fs::path manifest = manifest_path(path);
  const std::string text = read_file(manifest);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(manifest.string() + ": malformed manifest: " + e.what(), e.byte);
  }
  try {
    if (j.at("format").get<std::string>() != "aoa-checkpoint") {
      throw MagicError(manifest.string() + ": not an aoa checkpoint manifest", 0);
    }
    if (j.at("version").get<int>() != 1) {
      throw VersionError(manifest.string() + ": unsupported checkpoint version", 0);
    }
    Checkpoint ck;
    ck.vocab = Vocabulary::from_words(j.at("vocab").get<std::vector<std::string>>());
    ModelConfig cfg = model_config_from_json(j.at("config").dump());
    if (cfg.vocab_size != ck.vocab.size()) {
      throw ShapeMismatchError(manifest.string() + ": config vocab_size " + std::to_string(cfg.vocab_size) +
                                   " but vocabulary has " + std::to_string(ck.vocab.size()) + " words",
                               0);
    }
    ck.model = CaptionModel::init(cfg, 0);

    const fs::path blob_path = manifest.parent_path() / j.at("blob").get<std::string>();
    const std::string blob = read_file(blob_path);
    const auto& entries = ck.model.parameters().entries();
    const auto& tensors = j.at("tensors");
    if (tensors.size() != entries.size()) {
      throw ShapeMismatchError(manifest.string() + ": " + std::to_string(tensors.size()) +
                                   " tensors listed, model expects " + std::to_string(entries.size()),
                               0);
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& t = tensors[i];
      const auto name = t.at("name").get<std::string>();
      if (name != entries[i].name) {
        throw ShapeMismatchError(manifest.string() + ": tensor " + std::to_string(i) + " is '" + name +
                                     "', expected '" + entries[i].name + "'",
                                 0);
      }
      const auto dims = t.at("shape").get<std::vector<std::size_t>>();
      const auto offset = t.at("offset").get<std::size_t>();
      Tensor target = entries[i].tensor;
      if (Shape(dims) != target.shape()) {
        throw ShapeMismatchError(blob_path.string() + ": tensor " + name + " has shape " +
                                     Shape(dims).str() + ", expected " + target.shape().str(),
                                 offset);
      }
      const std::size_t n = target.numel();
      if (offset > blob.size() || blob.size() - offset < n * 4) {
        throw TruncationError(blob_path.string() + ": tensor " + name + " runs past end of blob", offset);
      }
      auto dst = target.mutable_data();
      for (std::size_t e = 0; e < n; ++e) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b)
          bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + e * 4 + b])) << (8 * b);
        dst[e] = static_cast<double>(std::bit_cast<float>(bits));
      }
    }
    if (j.contains("blob_bytes") && j.at("blob_bytes").get<std::size_t>() != blob.size()) {
      throw TruncationError(blob_path.string() + ": blob has " + std::to_string(blob.size()) +
                                " bytes, manifest declares " + std::to_string(j.at("blob_bytes").get<std::size_t>()),
                            blob.size());
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest.string() + ": malformed manifest: " + e.what(), 0);
  }
}

}  // namespace aoa
