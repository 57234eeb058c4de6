#include "costfuse/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "costfuse/csv.hpp"
#include "costfuse/error.hpp"

namespace costfuse::config {

namespace {

bool is_bare(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
}

class Parser {
 public:
  Parser(std::string_view text, std::string source) : text_(text), source_(std::move(source)) {}

  Document parse() {
    Document doc;
    std::string section;
    doc[section];
    std::set<std::string> seen_sections;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        const auto header_line = line_;
        ++pos_;
        skip_space();
        section = bare_key("section name");
        skip_space();
        expect(']');
        if (!seen_sections.insert(section).second) fail_at(header_line, "duplicate section [" + section + "]");
        end_of_line();
        doc[section];
        continue;
      }
      const auto key_line = line_;
      const auto key = bare_key("key");
      skip_space();
      expect('=');
      skip_space();
      Value v = value();
      v.line = key_line;
      if (!doc[section].emplace(key, std::move(v)).second) {
        fail_at(key_line, "duplicate key '" + (section.empty() ? key : section + "." + key) + "'");
      }
      end_of_line();
    }
    return doc;
  }

 private:
  bool eof() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }

  [[noreturn]] void fail(const std::string& what) const { fail_at(line_, what); }
  [[noreturn]] void fail_at(std::size_t line, const std::string& what) const { throw ParseError(source_, line, what); }

  void expect(char c) {
    if (eof() || peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_space() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }

  void skip_comment() {
    if (!eof() && peek() == '#') {
      while (!eof() && peek() != '\n') ++pos_;
    }
  }

  bool newline() {
    if (!eof() && peek() == '\r') ++pos_;
    if (!eof() && peek() == '\n') {
      ++pos_;
      ++line_;
      return true;
    }
    return false;
  }

  void skip_blank_lines() {
    while (true) {
      skip_space();
      skip_comment();
      if (!newline()) return;
    }
  }

  void end_of_line() {
    skip_space();
    skip_comment();
    if (!eof() && !newline()) fail("unexpected trailing characters");
  }

  std::string bare_key(const char* what) {
    const auto start = pos_;
    while (!eof() && is_bare(peek())) ++pos_;
    if (pos_ == start) fail(std::string("expected ") + what);
    return std::string(text_.substr(start, pos_ - start));
  }

  Value value() {
    if (eof()) fail("missing value");
    const char c = peek();
    if (c == '"') return {string_value()};
    if (c == '[') return {array_value()};
    if (text_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return {true};
    }
    if (text_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return {false};
    }
    return number_value();
  }

  std::string string_value() {
    ++pos_;
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = text_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) fail("unterminated string");
      switch (text_[pos_++]) {
        case '"':
          out += '"';
          break;
        case '\\':
          out += '\\';
          break;
        case 'n':
          out += '\n';
          break;
        case 't':
          out += '\t';
          break;
        default:
          fail("unsupported escape sequence");
      }
    }
  }

  Value number_value() {
    const auto start = pos_;
    bool real = false;
    while (!eof()) {
      const char c = peek();
      if (c == '.' || c == 'e' || c == 'E') {
        real = true;
      } else if (!((c >= '0' && c <= '9') || c == '+' || c == '-')) {
        break;
      }
      ++pos_;
    }
    auto token = text_.substr(start, pos_ - start);
    if (token.empty()) fail("expected a value");
    if (token.front() == '+') token.remove_prefix(1);
    const char* first = token.data();
    const char* last = token.data() + token.size();
    if (real) {
      double d = 0.0;
      const auto [ptr, ec] = std::from_chars(first, last, d);
      if (ec != std::errc{} || ptr != last) fail("malformed number '" + std::string(token) + "'");
      return {d};
    }
    std::int64_t i = 0;
    const auto [ptr, ec] = std::from_chars(first, last, i);
    if (ec != std::errc{} || ptr != last) fail("malformed integer '" + std::string(token) + "'");
    return {i};
  }

  Value::Array array_value() {
    ++pos_;
    Value::Array items;
    while (true) {
      skip_blank_lines();
      if (eof()) fail("unterminated array");
      if (peek() == ']') {
        ++pos_;
        return items;
      }
      Value v = value();
      v.line = line_;
      if (std::holds_alternative<Value::Array>(v.data)) fail("nested arrays are not supported");
      items.push_back(std::move(v));
      skip_blank_lines();
      if (!eof() && peek() == ',') {
        ++pos_;
      } else if (eof() || peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  std::string_view text_;
  std::string source_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

/// Reads typed fields from one section and reports leftovers as unknown.
class Section {
 public:
  Section(const std::map<std::string, Value>* values, std::string name, std::string source)
      : values_(values), name_(std::move(name)), source_(std::move(source)) {}

  void get(const std::string& key, std::string& out) {
    if (const auto* v = take(key)) out = as<std::string>(*v, key, "a string");
  }
  void get(const std::string& key, bool& out) {
    if (const auto* v = take(key)) out = as<bool>(*v, key, "a boolean");
  }
  void get(const std::string& key, int& out) {
    if (const auto* v = take(key)) {
      const auto i = as<std::int64_t>(*v, key, "an integer");
      if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) bad(*v, key, "is out of range");
      out = static_cast<int>(i);
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (const auto* v = take(key)) {
      const auto i = as<std::int64_t>(*v, key, "an integer");
      if (i < 0) bad(*v, key, "must be non-negative");
      out = static_cast<std::uint64_t>(i);
    }
  }
  void get(const std::string& key, double& out) {
    if (const auto* v = take(key)) out = number(*v, key);
  }
  void get(const std::string& key, std::vector<std::string>& out) {
    if (const auto* v = take(key)) {
      out.clear();
      for (const auto& item : as<Value::Array>(*v, key, "an array")) out.push_back(as<std::string>(item, key, "an array of strings"));
    }
  }
  void get(const std::string& key, std::vector<std::int64_t>& out) {
    if (const auto* v = take(key)) {
      out.clear();
      for (const auto& item : as<Value::Array>(*v, key, "an array")) out.push_back(as<std::int64_t>(item, key, "an array of integers"));
    }
  }
  void get(const std::string& key, std::vector<double>& out) {
    if (const auto* v = take(key)) {
      out.clear();
      for (const auto& item : as<Value::Array>(*v, key, "an array")) out.push_back(number(item, key));
    }
  }

  void finish() const {
    if (!values_) return;
    for (const auto& [key, v] : *values_) {
      if (!used_.contains(key)) {
        throw ValidationError(source_ + ":" + std::to_string(v.line) + ": unknown key '" + path(key) + "'");
      }
    }
  }

 private:
  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  const Value* take(const std::string& key) {
    if (!values_) return nullptr;
    const auto it = values_->find(key);
    if (it == values_->end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  [[noreturn]] void bad(const Value& v, const std::string& key, const std::string& what) const {
    throw ValidationError(source_ + ":" + std::to_string(v.line) + ": '" + path(key) + "' " + what);
  }

  template <typename T>
  const T& as(const Value& v, const std::string& key, const char* what) const {
    const auto* p = std::get_if<T>(&v.data);
    if (!p) bad(v, key, std::string("must be ") + what);
    return *p;
  }

  double number(const Value& v, const std::string& key) const {
    if (const auto* i = std::get_if<std::int64_t>(&v.data)) return static_cast<double>(*i);
    return as<double>(v, key, "a number");
  }

  const std::map<std::string, Value>* values_;
  std::string name_;
  std::string source_;
  std::set<std::string> used_;
};

void read_classifier(Section& s, ClassifierConfig& c) {
  s.get("hidden", c.hidden);
  s.get("epochs", c.epochs);
  s.get("learning_rate", c.learning_rate);
  s.get("batch_size", c.batch_size);
  s.get("standardize", c.standardize);
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ValidationError("invalid config: '" + field + "' " + what);
}

void check_classifier(const ClassifierConfig& c, const std::string& section) {
  require(c.hidden.size() >= 2, section + ".hidden", "needs at least two hidden layer sizes");
  for (auto h : c.hidden) require(h >= 1 && h <= 1 << 20, section + ".hidden", "entries must be in [1, 2^20]");
  require(c.epochs >= 1, section + ".epochs", "must be >= 1");
  require(c.learning_rate > 0.0 && std::isfinite(c.learning_rate), section + ".learning_rate", "must be positive");
  require(c.batch_size >= 0, section + ".batch_size", "must be >= 0");
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"':
        out += "\\\"";
        break;
      case '\\':
        out += "\\\\";
        break;
      case '\n':
        out += "\\n";
        break;
      case '\t':
        out += "\\t";
        break;
      default:
        out += c;
    }
  }
  return out + '"';
}

std::string real(double v) {
  auto s = csv::format_double(v);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

template <typename T, typename Fmt>
std::string array(const std::vector<T>& items, Fmt fmt) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + fmt(items[i]);
  return out + "]";
}

std::string boolean(bool b) { return b ? "true" : "false"; }

void write_classifier(std::ostream& o, const ClassifierConfig& c) {
  o << "hidden = " << array(c.hidden, [](std::int64_t h) { return std::to_string(h); }) << '\n'
    << "epochs = " << c.epochs << '\n'
    << "learning_rate = " << real(c.learning_rate) << '\n'
    << "batch_size = " << c.batch_size << '\n'
    << "standardize = " << boolean(c.standardize) << '\n';
}

}  // namespace

Document parse_document(std::string_view text, const std::string& source) { return Parser(text, source).parse(); }

void RunConfig::validate() const {
  std::set<std::string> seen;
  for (const auto& s : stages) {
    require(std::find(kAllStages.begin(), kAllStages.end(), s) != kAllStages.end(), "run.stages",
            "contains unknown stage '" + s + "'");
    require(seen.insert(s).second, "run.stages", "lists '" + s + "' twice");
  }
  require(seed <= static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()), "run.seed", "must fit in 63 bits");
  require(!out_dir.empty(), "run.out_dir", "must not be empty");

  require(gen.image_size >= 32, "gen.image_size", "must be >= 32 (smallest canvas that fits every shape)");
  require(gen.color_per_class >= 1, "gen.color_per_class", "must be >= 1");
  require(gen.shape_per_class >= 1, "gen.shape_per_class", "must be >= 1");
  require(gen.texture_classes >= 1 && gen.texture_classes <= 47, "gen.texture_classes", "must be in [1, 47]");
  require(gen.texture_per_class >= 1, "gen.texture_per_class", "must be >= 1");
  require(gen.identities >= 2 && gen.identities <= 70, "gen.identities", "must be in [2, 70]");
  require(gen.train_per_identity >= 2, "gen.train_per_identity", "must be >= 2");
  require(gen.val_per_identity >= 2, "gen.val_per_identity", "must be >= 2");
  require(gen.test_per_identity >= 2, "gen.test_per_identity", "must be >= 2");

  require(dictionary.signal_size >= 1, "dictionary.signal_size", "must be >= 1");
  require(dictionary.atoms >= 1, "dictionary.atoms", "must be >= 1");
  require(dictionary.lambda >= 0.0 && std::isfinite(dictionary.lambda), "dictionary.lambda", "must be >= 0");
  require(dictionary.step > 0.0 && std::isfinite(dictionary.step), "dictionary.step", "must be positive");
  require(dictionary.max_iters >= 1, "dictionary.max_iters", "must be >= 1");
  require(dictionary.epochs >= 1, "dictionary.epochs", "must be >= 1");

  check_classifier(cost, "cost");
  check_classifier(backend.classifier, "backend");
  require(backend.mode == "identity" || backend.mode == "pair", "backend.mode", "must be identity or pair");
  require(backend.input_size >= 1, "backend.input_size", "must be >= 1");
  require(backend.imposters_per_genuine >= 1, "backend.imposters_per_genuine", "must be >= 1");

  require(fusion.alpha >= 0.0 && fusion.alpha <= 1.0, "fusion.alpha", "must be in [0, 1]");
  require(!fusion.grid.empty(), "fusion.grid", "must not be empty");
  for (double a : fusion.grid) require(a >= 0.0 && a <= 1.0, "fusion.grid", "values must be in [0, 1]");
  require(fusion.normalization == "minmax" || fusion.normalization == "none", "fusion.normalization",
          "must be minmax or none");
  require(fusion.distance == "euclidean" || fusion.distance == "cosine", "fusion.distance",
          "must be euclidean or cosine");
}

RunConfig from_document(const Document& doc, const std::string& source) {
  static const std::set<std::string> known{"", "run", "gen", "dictionary", "cost", "backend", "fusion"};
  for (const auto& [name, values] : doc) {
    if (!known.contains(name)) {
      const auto line = values.empty() ? std::size_t{0} : values.begin()->second.line;
      throw ValidationError(source + ":" + std::to_string(line) + ": unknown section '" + name + "'");
    }
  }
  auto section = [&](const std::string& name) {
    const auto it = doc.find(name);
    return Section(it == doc.end() ? nullptr : &it->second, name, source);
  };

  RunConfig c;
  Section top = section("");
  top.finish();

  Section run = section("run");
  run.get("seed", c.seed);
  run.get("out_dir", c.out_dir);
  run.get("stages", c.stages);
  run.finish();

  Section gen = section("gen");
  gen.get("image_size", c.gen.image_size);
  gen.get("color_per_class", c.gen.color_per_class);
  gen.get("shape_per_class", c.gen.shape_per_class);
  gen.get("texture_dir", c.gen.texture_dir);
  gen.get("texture_classes", c.gen.texture_classes);
  gen.get("texture_per_class", c.gen.texture_per_class);
  gen.get("literal_red", c.gen.literal_red);
  gen.get("identities", c.gen.identities);
  gen.get("train_per_identity", c.gen.train_per_identity);
  gen.get("val_per_identity", c.gen.val_per_identity);
  gen.get("test_per_identity", c.gen.test_per_identity);
  gen.finish();

  Section dict = section("dictionary");
  dict.get("signal_size", c.dictionary.signal_size);
  dict.get("atoms", c.dictionary.atoms);
  dict.get("lambda", c.dictionary.lambda);
  dict.get("step", c.dictionary.step);
  dict.get("max_iters", c.dictionary.max_iters);
  dict.get("epochs", c.dictionary.epochs);
  dict.finish();

  Section cost = section("cost");
  read_classifier(cost, c.cost);
  cost.finish();

  Section backend = section("backend");
  backend.get("mode", c.backend.mode);
  backend.get("precomputed", c.backend.precomputed);
  backend.get("input_size", c.backend.input_size);
  backend.get("imposters_per_genuine", c.backend.imposters_per_genuine);
  read_classifier(backend, c.backend.classifier);
  backend.finish();

  Section fusion = section("fusion");
  fusion.get("alpha", c.fusion.alpha);
  fusion.get("search", c.fusion.search);
  fusion.get("grid", c.fusion.grid);
  fusion.get("normalization", c.fusion.normalization);
  fusion.get("distance", c.fusion.distance);
  fusion.finish();

  c.validate();
  return c;
}

RunConfig parse_config(std::string_view text, const std::string& source) {
  return from_document(parse_document(text, source), source);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string serialize(const RunConfig& c) {
  std::ostringstream o;
  o << "[run]\n"
    << "seed = " << c.seed << '\n'
    << "out_dir = " << quote(c.out_dir) << '\n'
    << "stages = " << array(c.stages, quote) << "\n\n";
  o << "[gen]\n"
    << "image_size = " << c.gen.image_size << '\n'
    << "color_per_class = " << c.gen.color_per_class << '\n'
    << "shape_per_class = " << c.gen.shape_per_class << '\n'
    << "texture_dir = " << quote(c.gen.texture_dir) << '\n'
    << "texture_classes = " << c.gen.texture_classes << '\n'
    << "texture_per_class = " << c.gen.texture_per_class << '\n'
    << "literal_red = " << boolean(c.gen.literal_red) << '\n'
    << "identities = " << c.gen.identities << '\n'
    << "train_per_identity = " << c.gen.train_per_identity << '\n'
    << "val_per_identity = " << c.gen.val_per_identity << '\n'
    << "test_per_identity = " << c.gen.test_per_identity << "\n\n";
  o << "[dictionary]\n"
    << "signal_size = " << c.dictionary.signal_size << '\n'
    << "atoms = " << c.dictionary.atoms << '\n'
    << "lambda = " << real(c.dictionary.lambda) << '\n'
    << "step = " << real(c.dictionary.step) << '\n'
    << "max_iters = " << c.dictionary.max_iters << '\n'
    << "epochs = " << c.dictionary.epochs << "\n\n";
  o << "[cost]\n";
  write_classifier(o, c.cost);
  o << "\n[backend]\n"
    << "mode = " << quote(c.backend.mode) << '\n'
    << "precomputed = " << quote(c.backend.precomputed) << '\n'
    << "input_size = " << c.backend.input_size << '\n'
    << "imposters_per_genuine = " << c.backend.imposters_per_genuine << '\n';
  write_classifier(o, c.backend.classifier);
  o << "\n[fusion]\n"
    << "alpha = " << real(c.fusion.alpha) << '\n'
    << "search = " << boolean(c.fusion.search) << '\n'
    << "grid = " << array(c.fusion.grid, real) << '\n'
    << "normalization = " << quote(c.fusion.normalization) << '\n'
    << "distance = " << quote(c.fusion.distance) << '\n';
  return o.str();
}

}  // namespace costfuse::config
