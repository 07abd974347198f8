#include "smcdesign/config.hpp"

#include <json.hpp>

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace smcdesign {

namespace {

using json = nlohmann::json;

// Walks a JSON object, remembering the dotted path for diagnostics and
// rejecting keys nobody asked for.
class Reader {
 public:
  Reader(const json& node, std::string path, std::string_view source)
      : node_(node), path_(std::move(path)), source_(source) {
    if (!node_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
    throw ConfigError(std::string(source_) + ": " + (field.empty() ? "<root>" : field) + ": " +
                      msg);
  }

  std::string field(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  bool has(std::string_view key) const {
    seen_.insert(std::string(key));
    return node_.contains(key) && !node_.at(std::string(key)).is_null();
  }

  const json& at(std::string_view key) const {
    if (!has(key)) fail(field(key), "missing required field");
    return node_.at(std::string(key));
  }

  Reader object(std::string_view key) const { return Reader(at(key), field(key), source_); }

  double number(std::string_view key) const {
    const json& v = at(key);
    if (!v.is_number()) fail(field(key), "expected a number");
    return v.get<double>();
  }
  double number(std::string_view key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }

  std::int64_t integer(std::string_view key) const {
    const json& v = at(key);
    if (!v.is_number_integer()) fail(field(key), "expected an integer");
    return v.get<std::int64_t>();
  }
  std::int64_t integer(std::string_view key, std::int64_t fallback) const {
    return has(key) ? integer(key) : fallback;
  }

  std::uint64_t unsigned_integer(std::string_view key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_number_unsigned()) fail(field(key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  std::string string(std::string_view key) const {
    const json& v = at(key);
    if (!v.is_string()) fail(field(key), "expected a string");
    return v.get<std::string>();
  }
  std::string string(std::string_view key, std::string fallback) const {
    return has(key) ? string(key) : fallback;
  }

  Vector vector(std::string_view key) const {
    const json& v = at(key);
    if (!v.is_array() || v.empty()) fail(field(key), "expected a non-empty array of numbers");
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) fail(field(key) + "[" + std::to_string(i) + "]", "expected a number");
      out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
    }
    return out;
  }

  // Either a list of rows or {"diag": [...]}.
  Matrix matrix(std::string_view key) const {
    const json& v = at(key);
    if (v.is_object()) {
      Reader r(v, field(key), source_);
      const Vector diag = r.vector("diag");
      r.finish();
      return diag.asDiagonal();
    }
    if (!v.is_array() || v.empty()) fail(field(key), "expected a matrix (rows or {\"diag\": [...]})");
    const std::size_t n = v.size();
    Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const std::string row = field(key) + "[" + std::to_string(i) + "]";
      if (!v[i].is_array() || v[i].size() != n) {
        fail(row, "expected a row of " + std::to_string(n) + " numbers (square matrix)");
      }
      for (std::size_t k = 0; k < n; ++k) {
        if (!v[i][k].is_number()) fail(row + "[" + std::to_string(k) + "]", "expected a number");
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v[i][k].get<double>();
      }
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) fail(field(key), "unknown field");
    }
  }

  const std::string& path() const { return path_; }

 private:
  const json& node_;
  std::string path_;
  std::string_view source_;
  mutable std::set<std::string> seen_;
};

template <class F>
auto checked(const Reader& r, const std::string& field, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    r.fail(field, e.what());
  }
}

GaussianPrior read_gaussian(const Reader& r) {
  GaussianPrior g;
  g.mean = r.vector("mean");
  g.covariance = r.matrix("covariance");
  r.finish();
  checked(r, r.path(), [&] {
    g.validate();
    return 0;
  });
  return g;
}

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

BenchmarkConfig parse_config(std::string_view text, std::string_view source_name) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // e.byte is one past the offending character.
    const auto [line, col] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
    std::string msg = e.what();
    if (const auto pos = msg.find("syntax error"); pos != std::string::npos) msg = msg.substr(pos);
    throw ConfigError(std::string(source_name) + ":" + std::to_string(line) + ":" +
                      std::to_string(col) + ": " + msg);
  }

  const Reader root(doc, "", source_name);
  BenchmarkConfig cfg;

  {
    const Reader m = root.object("model");
    cfg.model.id = m.string("id");
    if (m.has("t2")) cfg.model.t2 = m.number("t2");
    m.finish();
    checked(m, m.field("id"), [&] { return make_model(cfg.model) != nullptr; });
  }
  cfg.prior = read_gaussian(root.object("prior"));

  if (root.has("truth")) {
    const Reader t = root.object("truth");
    const std::string kind = t.string("kind", "prior");
    if (kind == "prior") {
      cfg.truth.kind = TruthSpec::Kind::prior;
      t.finish();
    } else if (kind == "gaussian") {
      cfg.truth.kind = TruthSpec::Kind::gaussian;
      cfg.truth.gaussian.mean = t.vector("mean");
      cfg.truth.gaussian.covariance = t.matrix("covariance");
      t.finish();
      checked(t, t.path(), [&] {
        cfg.truth.gaussian.validate();
        return 0;
      });
    } else if (kind == "fixed") {
      cfg.truth.kind = TruthSpec::Kind::fixed;
      cfg.truth.values = t.vector("values");
      t.finish();
    } else {
      t.fail(t.field("kind"), "unknown kind '" + kind + "'; valid: prior gaussian fixed");
    }
  }

  const auto positive_int = [&](const Reader& r, std::string_view key, std::int64_t fallback,
                                std::int64_t min) {
    const std::int64_t v = r.integer(key, fallback);
    if (v < min || v > std::numeric_limits<int>::max()) {
      r.fail(r.field(key), "must be an integer >= " + std::to_string(min));
    }
    return v;
  };
  cfg.n_particles = positive_int(root, "n_particles", cfg.n_particles, 1);
  cfg.n_experiments = static_cast<int>(positive_int(root, "n_experiments", cfg.n_experiments, 0));
  cfg.n_trials = static_cast<int>(positive_int(root, "n_trials", cfg.n_trials, 1));
  cfg.threads = static_cast<int>(positive_int(root, "threads", cfg.threads, 1));
  cfg.base_seed = root.unsigned_integer("seed", cfg.base_seed);
  cfg.region_z = root.number("region_z", cfg.region_z);
  if (!(cfg.region_z > 0.0)) root.fail("region_z", "must be > 0");
  if (root.has("bcrb_mode")) {
    cfg.bcrb_mode = checked(root, "bcrb_mode",
                            [&] { return parse_bcrb_mode(root.string("bcrb_mode")); });
  }
  if (root.has("q")) {
    cfg.q = root.matrix("q");
    checked(root, "q", [&] { return ScaleMatrix(cfg.q).dimension(); });
  }

  if (root.has("design")) {
    const Reader d = root.object("design");
    DesignConfig& dc = cfg.design;
    dc.n_guesses = static_cast<int>(positive_int(d, "n_guesses", dc.n_guesses, 1));
    dc.approx_ratio = d.number("approx_ratio", dc.approx_ratio);
    if (d.has("utility")) {
      dc.utility_kind =
          checked(d, d.field("utility"), [&] { return parse_utility_kind(d.string("utility")); });
    }
    if (d.has("optimizer")) {
      dc.optimizer_kind = checked(d, d.field("optimizer"),
                                  [&] { return parse_optimizer_kind(d.string("optimizer")); });
    }
    if (d.has("heuristic")) {
      dc.heuristic_kind = checked(d, d.field("heuristic"),
                                  [&] { return parse_heuristic_kind(d.string("heuristic")); });
    }
    dc.heuristic_params.scale = d.number("heuristic_scale", dc.heuristic_params.scale);
    if (d.has("nv_weighting")) {
      dc.nv_weighting = checked(d, d.field("nv_weighting"),
                                [&] { return parse_nv_weighting(d.string("nv_weighting")); });
    }
    d.finish();
  }

  if (root.has("resample")) {
    const Reader r = root.object("resample");
    cfg.resample.a = r.number("a", cfg.resample.a);
    cfg.resample.resample_threshold = r.number("threshold", cfg.resample.resample_threshold);
    r.finish();
  }
  root.finish();

  checked(root, "", [&] {
    cfg.validate();
    return 0;
  });
  return cfg;
}

BenchmarkConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("file not found: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

}  // namespace smcdesign
