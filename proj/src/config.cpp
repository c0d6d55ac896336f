#include "mgt/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "mgt/errors.hpp"

namespace mgt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || p != end) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) {
      throw std::invalid_argument(text);
    }
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") {
    return true;
  }
  if (text == "false" || text == "0" || text == "no") {
    return false;
  }
  throw ConfigError("config key '" + key + "': expected true/false, got '" + text + "'");
}

std::string format_double(double v) {
  char buf[32];
  const auto end = std::to_chars(buf, buf + sizeof(buf), v).ptr;
  return std::string(buf, end);
}

struct Field {
  const char* key;
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

#define MGT_INT(name, member)                                                            \
  Field {                                                                                \
    name, [](Config& c, const std::string& v) { c.member = parse_number<int>(name, v); }, \
        [](const Config& c) { return std::to_string(c.member); }                         \
  }
#define MGT_DOUBLE(name, member)                                                      \
  Field {                                                                             \
    name, [](Config& c, const std::string& v) { c.member = parse_double(name, v); },  \
        [](const Config& c) { return format_double(c.member); }                       \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      MGT_INT("k", k),
      MGT_INT("L", levels),
      MGT_INT("epochs", epochs),
      MGT_DOUBLE("lr", lr),
      MGT_INT("batch_size", batch_size),
      MGT_DOUBLE("clip_norm", clip_norm),
      MGT_INT("emb_dim", emb_dim),
      MGT_INT("hidden", hidden),
      Field{"seed",
            [](Config& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
            [](const Config& c) { return std::to_string(c.seed); }},
      MGT_INT("truncation", truncation),
      Field{"resample_per_epoch",
            [](Config& c, const std::string& v) {
              c.resample_per_epoch = parse_bool("resample_per_epoch", v);
            },
            [](const Config& c) { return std::string(c.resample_per_epoch ? "true" : "false"); }},
      MGT_INT("max_vocab", max_vocab),
      MGT_INT("train_dialogs", train_dialogs),
      MGT_INT("valid_dialogs", valid_dialogs),
      MGT_INT("test_dialogs", test_dialogs),
      Field{"generator_spec", [](Config& c, const std::string& v) { c.generator_spec = v; },
            [](const Config& c) { return c.generator_spec; }},
      MGT_INT("probe_epochs", probe_epochs),
      MGT_DOUBLE("probe_lr", probe_lr),
      MGT_INT("probe_batch", probe_batch),
      MGT_INT("finetune_epochs", finetune_epochs),
      MGT_DOUBLE("finetune_lr", finetune_lr),
      MGT_INT("bootstrap_iterations", bootstrap_iterations),
  };
  return all;
}

#undef MGT_INT
#undef MGT_DOUBLE

}  // namespace

KeyValues parse_key_values(const std::string& text, const std::string& origin) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') {
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) {
      throw ParseError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    if (!out.emplace(key, trim(t.substr(eq + 1))).second) {
      throw ParseError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open config file " + path.string());
  }
  std::ostringstream text;
  text << in.rdbuf();
  return parse_key_values(text.str(), path.string());
}

Config config_from_key_values(const KeyValues& values, Config base) {
  for (const auto& [key, value] : values) {
    bool known = false;
    for (const auto& f : fields()) {
      if (key == f.key) {
        f.set(base, value);
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  validate_config(base);
  return base;
}

Config load_config(const std::filesystem::path& path, Config base) {
  return config_from_key_values(load_key_values(path), std::move(base));
}

std::string format_config(const Config& config) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(config);
    out += "\n";
  }
  return out;
}

void validate_config(const Config& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) {
      throw ConfigError(msg);
    }
  };
  require(c.k >= 2, "k must be >= 2");
  require(c.levels >= 1, "L must be >= 1");
  require(c.epochs >= 1, "epochs must be >= 1");
  require(c.lr > 0.0, "lr must be positive");
  require(c.batch_size >= 1, "batch_size must be >= 1");
  require(c.clip_norm > 0.0, "clip_norm must be positive");
  require(c.emb_dim >= 1 && c.hidden >= 1, "emb_dim and hidden must be positive");
  require(c.truncation >= 1, "truncation must be >= 1");
  require(c.max_vocab >= 1, "max_vocab must be >= 1");
  require(c.train_dialogs >= 1 && c.valid_dialogs >= 1 && c.test_dialogs >= 1,
          "split sizes must be positive");
  require(c.probe_epochs >= 1 && c.probe_batch >= 1 && c.probe_lr > 0.0,
          "probe settings must be positive");
  require(c.finetune_epochs >= 1 && c.finetune_lr > 0.0, "fine-tune settings must be positive");
  require(c.bootstrap_iterations >= 1, "bootstrap_iterations must be >= 1");
}

}  // namespace mgt
