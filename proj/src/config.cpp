#include "aoa/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "aoa/errors.hpp"

namespace aoa {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("bad value '" + v + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean '" + v + "' for " + key);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define AOA_SIZE(KEY, EXPR)                                                                   \
  Field {                                                                                     \
    KEY, [](const RunConfig& c) { return std::to_string(c.EXPR); },                           \
        [](RunConfig& c, const std::string& v) { c.EXPR = parse_number<std::size_t>(KEY, v); } \
  }
#define AOA_DOUBLE(KEY, EXPR)                                                              \
  Field {                                                                                  \
    KEY, [](const RunConfig& c) { return format_double(c.EXPR); },                         \
        [](RunConfig& c, const std::string& v) { c.EXPR = parse_number<double>(KEY, v); } \
  }
#define AOA_STRING(KEY, EXPR)                                                                  \
  Field {                                                                                      \
    KEY, [](const RunConfig& c) { return c.EXPR; }, [](RunConfig& c, const std::string& v) { \
      c.EXPR = v;                                                                              \
    }                                                                                          \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      Field{"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
            [](RunConfig& c, const std::string& v) {
              c.seed = parse_number<std::uint64_t>("seed", v);
              c.train.seed = c.seed;
            }},
      AOA_STRING("data.features", features),
      AOA_STRING("data.captions", captions),
      AOA_STRING("data.split", split),
      AOA_SIZE("vocab.min_count", vocab_min_count),
      AOA_STRING("init", init),
      AOA_SIZE("eval.beam", eval_beam),
      AOA_SIZE("model.dim", model.model_dim),
      AOA_SIZE("model.embed_dim", model.embed_dim),
      AOA_SIZE("model.encoder_heads", model.encoder_heads),
      AOA_SIZE("model.decoder_heads", model.decoder_heads),
      AOA_SIZE("model.refine_layers", model.refine_layers),
      AOA_SIZE("model.ff_dim", model.ff_dim),
      Field{"model.encoder", [](const RunConfig& c) { return to_string(c.model.encoder); },
            [](RunConfig& c, const std::string& v) { c.model.encoder = parse_encoder_variant(v); }},
      Field{"model.decoder", [](const RunConfig& c) { return to_string(c.model.decoder); },
            [](RunConfig& c, const std::string& v) { c.model.decoder = parse_decoder_scheme(v); }},
      Field{"model.experimental", [](const RunConfig& c) { return std::string(c.model.experimental ? "true" : "false"); },
            [](RunConfig& c, const std::string& v) { c.model.experimental = parse_bool("model.experimental", v); }},
      AOA_DOUBLE("model.dropout", model.dropout),
      AOA_DOUBLE("model.ln_eps", model.ln_eps),
      AOA_SIZE("train.batch_size", train.batch_size),
      AOA_SIZE("train.xe_epochs", train.xe_epochs),
      AOA_SIZE("train.scst_epochs", train.scst_epochs),
      AOA_DOUBLE("train.lr_xe", train.lr_xe),
      AOA_DOUBLE("train.lr_xe_decay", train.lr_xe_decay),
      AOA_SIZE("train.lr_xe_every", train.lr_xe_every),
      AOA_DOUBLE("train.lr_scst", train.lr_scst),
      AOA_DOUBLE("train.lr_scst_decay", train.lr_scst_decay),
      AOA_SIZE("train.plateau_patience", train.plateau_patience),
      AOA_DOUBLE("train.ss_increment", train.ss_increment),
      AOA_SIZE("train.ss_every", train.ss_every),
      AOA_DOUBLE("train.ss_cap", train.ss_cap),
      AOA_DOUBLE("train.grad_clip", train.grad_clip),
      AOA_SIZE("train.max_len", train.max_len),
      AOA_SIZE("train.captions_per_image", train.captions_per_image),
  };
  return f;
}

}  // namespace

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string dump_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(config);
    out += '\n';
  }
  return out;
}

}  // namespace aoa
