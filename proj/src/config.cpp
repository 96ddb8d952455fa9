#include "rcav/config.hpp"

#include <cctype>
#include <charconv>
#include <functional>

#include "rcav/errors.hpp"
#include "rcav/hashing.hpp"
#include "rcav/tensor_io.hpp"

namespace rcav {

namespace {

class LineParser {
 public:
  LineParser(std::string_view s, std::size_t line) : s_(s), line_(line) {}

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end() {
    skip_ws();
    return pos_ == s_.size() || s_[pos_] == '#';
  }
  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + what);
  }

  std::string key() {
    skip_ws();
    const auto start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '-')) {
      ++pos_;
    }
    if (pos_ == start) fail("expected a key");
    return std::string(s_.substr(start, pos_ - start));
  }

  ConfigValue value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    ConfigValue v;
    const char c = s_[pos_];
    if (c == '"') {
      ++pos_;
      v.kind = ConfigValue::Kind::string;
      while (true) {
        if (pos_ >= s_.size()) fail("unterminated string");
        char ch = s_[pos_++];
        if (ch == '"') break;
        if (ch == '\\') {
          if (pos_ >= s_.size()) fail("dangling escape");
          const char e = s_[pos_++];
          ch = e == 'n' ? '\n' : e == 't' ? '\t' : e;
          if (e != 'n' && e != 't' && e != '"' && e != '\\') fail(std::string("unknown escape \\") + e);
        }
        v.text.push_back(ch);
      }
      return v;
    }
    if (c == '[') {
      ++pos_;
      v.kind = ConfigValue::Kind::array;
      if (eat(']')) return v;
      do {
        v.items.push_back(value());
        if (v.items.back().kind == ConfigValue::Kind::array) fail("nested arrays are not supported");
      } while (eat(','));
      if (!eat(']')) fail("expected ']'");
      return v;
    }
    const auto start = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])) && s_[pos_] != ',' &&
           s_[pos_] != ']' && s_[pos_] != '#') {
      ++pos_;
    }
    v.text = std::string(s_.substr(start, pos_ - start));
    if (v.text == "true" || v.text == "false") {
      v.kind = ConfigValue::Kind::boolean;
      return v;
    }
    std::int64_t i = 0;
    auto [p, ec] = std::from_chars(v.text.data(), v.text.data() + v.text.size(), i);
    if (ec == std::errc() && p == v.text.data() + v.text.size()) {
      v.kind = ConfigValue::Kind::integer;
      return v;
    }
    double d = 0.0;
    auto [p2, ec2] = std::from_chars(v.text.data(), v.text.data() + v.text.size(), d);
    if (ec2 == std::errc() && p2 == v.text.data() + v.text.size()) {
      v.kind = ConfigValue::Kind::number;
      return v;
    }
    fail("cannot parse value '" + v.text + "' (strings must be quoted)");
  }

 private:
  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out + "\"";
}

std::string num(double v) { return format_double(v); }

double as_number(const std::string& key, const ConfigValue& v) {
  if (v.kind != ConfigValue::Kind::integer && v.kind != ConfigValue::Kind::number) {
    throw ConfigError(key + " must be a number");
  }
  double d = 0.0;
  std::from_chars(v.text.data(), v.text.data() + v.text.size(), d);
  return d;
}

std::uint64_t as_count(const std::string& key, const ConfigValue& v) {
  if (v.kind != ConfigValue::Kind::integer || (!v.text.empty() && v.text[0] == '-')) {
    throw ConfigError(key + " must be a nonnegative integer");
  }
  std::uint64_t u = 0;
  std::from_chars(v.text.data(), v.text.data() + v.text.size(), u);
  return u;
}

const std::string& as_string(const std::string& key, const ConfigValue& v) {
  if (v.kind != ConfigValue::Kind::string) throw ConfigError(key + " must be a quoted string");
  return v.text;
}

bool as_bool(const std::string& key, const ConfigValue& v) {
  if (v.kind != ConfigValue::Kind::boolean) throw ConfigError(key + " must be true or false");
  return v.text == "true";
}

std::vector<std::string> as_strings(const std::string& key, const ConfigValue& v) {
  if (v.kind != ConfigValue::Kind::array) throw ConfigError(key + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& i : v.items) out.push_back(as_string(key, i));
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const ConfigValue&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seed", [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.seed = as_count(k, v); }},
      {"output", [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.output = as_string(k, v); }},
      {"dataset.kind",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.dataset.kind = parse_benchmark(as_string(k, v)); }},
      {"dataset.train_per_class",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.dataset.train_per_class = as_count(k, v); }},
      {"dataset.val_per_class",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.dataset.val_per_class = as_count(k, v); }},
      {"dataset.height", [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.dataset.height = as_count(k, v); }},
      {"dataset.width", [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.dataset.width = as_count(k, v); }},
      {"dataset.assignment",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) {
         c.dataset.assignment.clear();
         const auto names = as_strings(k, v);
         for (std::size_t i = 0; i < names.size(); ++i) {
           if (!names[i].empty()) c.dataset.assignment[i] = parse_texture(names[i]);
         }
       }},
      {"dataset.lambda", [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.dataset.lambda = as_number(k, v); }},
      {"dataset.target_texture",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) {
         c.dataset.target_texture = parse_texture(as_string(k, v));
       }},
      {"dataset.biased_class",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.dataset.biased_class = as_count(k, v); }},
      {"dataset.train_delta",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.dataset.train_delta = as_number(k, v); }},
      {"dataset.delta", [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.dataset.delta = as_number(k, v); }},
      {"model.architecture",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.model.architecture = as_string(k, v); }},
      {"model.epochs", [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.model.train.epochs = as_count(k, v); }},
      {"model.batch_size",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.model.train.batch_size = as_count(k, v); }},
      {"model.learning_rate",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.model.train.learning_rate = as_number(k, v); }},
      {"model.momentum",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.model.train.momentum = as_number(k, v); }},
      {"model.mixup_alpha",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.model.train.mixup_alpha = as_number(k, v); }},
      {"rcav.layers", [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.rcav.layers = as_strings(k, v); }},
      {"rcav.alpha", [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.rcav.alpha = as_number(k, v); }},
      {"rcav.method",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.rcav.method = parse_method(as_string(k, v)); }},
      {"rcav.null",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.rcav.null = parse_null_method(as_string(k, v)); }},
      {"rcav.permutations",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.rcav.permutations = as_count(k, v); }},
      {"rcav.sig", [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.rcav.sig = as_number(k, v); }},
      {"rcav.stop",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.rcav.stop = parse_stop_rule(as_string(k, v)); }},
      {"rcav.bootstrap", [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.rcav.bootstrap = as_count(k, v); }},
      {"rcav.concept_per_class",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.rcav.concept_per_class = as_count(k, v); }},
      {"rcav.logistic_learning_rate",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.rcav.logistic.learning_rate = as_number(k, v); }},
      {"rcav.logistic_l2",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.rcav.logistic.l2 = as_number(k, v); }},
      {"rcav.logistic_max_iter",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.rcav.logistic.max_iter = as_count(k, v); }},
      {"rcav.logistic_grad_tol",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.rcav.logistic.grad_tol = as_number(k, v); }},
      {"metrics.percentile",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.metrics.binarize_percentile = as_number(k, v); }},
      {"metrics.tau_permutations",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.metrics.tau_permutations = as_count(k, v); }},
      {"metrics.signed",
       [](RunConfig& c, const std::string& k, const ConfigValue& v) { c.metrics.signed_truth = as_bool(k, v); }},
  };
  return table;
}

std::string dataset_section(const RunConfig& c) {
  const auto& d = c.dataset;
  std::string s = "[dataset]\n";
  s += "kind = " + quote(std::string(benchmark_name(d.kind))) + "\n";
  s += "train_per_class = " + std::to_string(d.train_per_class) + "\n";
  s += "val_per_class = " + std::to_string(d.val_per_class) + "\n";
  s += "height = " + std::to_string(d.height) + "\n";
  s += "width = " + std::to_string(d.width) + "\n";
  if (d.kind == BenchmarkKind::textured) {
    std::size_t n = d.assignment.empty() ? 0 : d.assignment.rbegin()->first + 1;
    s += "assignment = [";
    for (std::size_t k = 0; k < n; ++k) {
      s += (k ? ", " : "") + quote(d.assignment.contains(k) ? std::string(texture_name(d.assignment.at(k))) : "");
    }
    s += "]\n";
    s += "lambda = " + num(d.lambda) + "\n";
    s += "target_texture = " + quote(std::string(texture_name(d.target_texture))) + "\n";
  } else {
    s += "biased_class = " + std::to_string(d.biased_class) + "\n";
    s += "train_delta = " + num(d.train_delta) + "\n";
    s += "delta = " + num(d.delta) + "\n";
  }
  return s;
}

std::string model_section(const RunConfig& c) {
  const auto& t = c.model.train;
  std::string s = "[model]\n";
  s += "architecture = " + quote(c.model.architecture) + "\n";
  s += "epochs = " + std::to_string(t.epochs) + "\n";
  s += "batch_size = " + std::to_string(t.batch_size) + "\n";
  s += "learning_rate = " + num(t.learning_rate) + "\n";
  s += "momentum = " + num(t.momentum) + "\n";
  s += "mixup_alpha = " + num(t.mixup_alpha) + "\n";
  return s;
}

std::string rcav_section(const RunConfig& c) {
  const auto& r = c.rcav;
  std::string s = "[rcav]\n";
  s += "layers = [";
  for (std::size_t i = 0; i < r.layers.size(); ++i) s += (i ? ", " : "") + quote(r.layers[i]);
  s += "]\n";
  s += "alpha = " + num(r.alpha) + "\n";
  s += "method = " + quote(std::string(method_name(r.method))) + "\n";
  s += "null = " + quote(std::string(null_method_name(r.null))) + "\n";
  s += "permutations = " + std::to_string(r.permutations) + "\n";
  s += "sig = " + num(r.sig) + "\n";
  s += "stop = " + quote(std::string(stop_rule_name(r.stop))) + "\n";
  s += "bootstrap = " + std::to_string(r.bootstrap) + "\n";
  s += "concept_per_class = " + std::to_string(r.concept_per_class) + "\n";
  s += "logistic_learning_rate = " + num(r.logistic.learning_rate) + "\n";
  s += "logistic_l2 = " + num(r.logistic.l2) + "\n";
  s += "logistic_max_iter = " + std::to_string(r.logistic.max_iter) + "\n";
  s += "logistic_grad_tol = " + num(r.logistic.grad_tol) + "\n";
  return s;
}

std::string metrics_section(const RunConfig& c) {
  const auto& m = c.metrics;
  std::string s = "[metrics]\n";
  s += "percentile = " + num(m.binarize_percentile) + "\n";
  s += "tau_permutations = " + std::to_string(m.tau_permutations) + "\n";
  s += std::string("signed = ") + (m.signed_truth ? "true" : "false") + "\n";
  return s;
}

std::string short_hash(const std::string& text) { return sha256_hex(text).substr(0, 16); }

}  // namespace

ConfigTable parse_config_table(std::string_view text) {
  ConfigTable table;
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    LineParser p(line, line_no);
    if (p.at_end()) continue;
    if (p.eat('[')) {
      section = p.key();
      if (!p.eat(']')) p.fail("expected ']' after section name");
      if (!p.at_end()) p.fail("trailing characters after section header");
      continue;
    }
    const std::string key = (section.empty() ? "" : section + ".") + p.key();
    if (!p.eat('=')) p.fail("expected '=' after " + key);
    ConfigValue v = p.value();
    if (!p.at_end()) p.fail("trailing characters after value of " + key);
    if (!table.emplace(key, std::move(v)).second) p.fail("duplicate key " + key);
  }
  return table;
}

RunConfig config_from_table(const ConfigTable& table) {
  RunConfig c;
  for (const auto& [key, value] : table) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key: " + key);
    it->second(c, key, value);
  }
  c.validate();
  return c;
}

RunConfig parse_config(std::string_view text) { return config_from_table(parse_config_table(text)); }

RunConfig load_config(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown config key: " + key);
  ConfigValue v;
  try {
    v = parse_config_table("v = " + value).at("v");
  } catch (const ConfigError&) {
    v.kind = ConfigValue::Kind::string;
    v.text = value;
  }
  it->second(cfg, key, v);
}

void RunConfig::validate() const {
  const auto& d = dataset;
  if (d.train_per_class == 0 || d.val_per_class == 0) throw ConfigError("dataset sizes must be positive");
  if (d.height < 8 || d.width < 8) throw ConfigError("images must be at least 8x8");
  if (d.kind == BenchmarkKind::textured) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!d.assignment.contains(k)) throw ConfigError("texture assignment is missing class " + std::to_string(k));
    }
    if (!(d.lambda >= 0.0 && d.lambda <= 1.0)) throw ConfigError("dataset.lambda must lie in [0,1]");
  } else {
    if (d.biased_class >= 2) throw ConfigError("dataset.biased_class must be 0 or 1");
    if (!(d.train_delta > -1.0) || !(d.delta > -1.0)) throw ConfigError("contrast deltas must be > -1");
  }
  if (model.architecture != "small_net") throw ConfigError("unknown architecture: " + model.architecture);
  model.train.validate();
  if (rcav.layers.empty()) throw ConfigError("rcav.layers is empty");
  if (!(rcav.alpha > 0.0)) throw ConfigError("rcav.alpha must be > 0");
  if (!(rcav.sig > 0.0 && rcav.sig < 1.0)) throw ConfigError("rcav.sig must lie in (0,1)");
  if (rcav.permutations == 0) throw ConfigError("rcav.permutations must be at least 1");
  if (rcav.concept_per_class == 0) throw ConfigError("rcav.concept_per_class must be positive");
  metrics.validate();
}

std::string RunConfig::to_toml() const {
  std::string s = "seed = " + std::to_string(seed) + "\n";
  s += "output = " + quote(output) + "\n\n";
  s += dataset_section(*this) + "\n" + model_section(*this) + "\n" + rcav_section(*this) + "\n" + metrics_section(*this);
  return s;
}

std::string RunConfig::dataset_hash() const {
  // lambda and delta only shape the evaluation counterfactuals, so they are
  // hashed with the metrics instead and a sweep over them keeps the model.
  RunConfig c = *this;
  c.dataset.lambda = 0.0;
  c.dataset.delta = 0.0;
  // The generator parameters that have no config key still take part.
  return short_hash("seed = " + std::to_string(seed) + "\n" + dataset_section(c) + c.dataset.to_json().dump());
}
std::string RunConfig::model_hash() const { return short_hash(dataset_hash() + "\n" + model_section(*this)); }
std::string RunConfig::cav_hash() const {
  std::string s = "[cav]\nlayers =";
  for (const auto& l : rcav.layers) s += " " + quote(l);
  s += "\nconcept_per_class = " + std::to_string(rcav.concept_per_class) + "\n";
  s += "logistic = " + num(rcav.logistic.learning_rate) + " " + num(rcav.logistic.l2) + " " +
       std::to_string(rcav.logistic.max_iter) + " " + num(rcav.logistic.grad_tol) + "\n";
  return short_hash(model_hash() + "\n" + s);
}
std::string RunConfig::rcav_hash() const { return short_hash(cav_hash() + "\n" + rcav_section(*this)); }
std::string RunConfig::metrics_hash() const {
  return short_hash(rcav_hash() + "\n" + metrics_section(*this) + "lambda = " + num(dataset.lambda) +
                    "\ndelta = " + num(dataset.delta) + "\n");
}
std::string RunConfig::hash() const {
  RunConfig c = *this;
  c.output.clear();
  return short_hash(c.to_toml());
}

}  // namespace rcav
