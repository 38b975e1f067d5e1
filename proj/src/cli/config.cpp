#include "hvq/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "hvq/dynamics.hpp"
#include "hvq/expr.hpp"

namespace hvq::cli {

using nlohmann::json;

const char* to_string(Experiment e) noexcept {
  switch (e) {
    case Experiment::propagate: return "propagate";
    case Experiment::trajectories: return "trajectories";
    case Experiment::ensemble: return "ensemble";
    case Experiment::double_slit: return "double_slit";
    case Experiment::measure_angular: return "measure_angular";
    case Experiment::measure_position: return "measure_position";
    case Experiment::classical: return "classical";
    case Experiment::verify: return "verify";
  }
  return "?";
}

std::string format_diagnostic(const Diagnostic& d) {
  if (d.line > 0) return fmt::format("line {}: {}: {}", d.line, d.pointer.empty() ? "/" : d.pointer, d.message);
  return fmt::format("{}: {}", d.pointer.empty() ? "/" : d.pointer, d.message);
}

// ---------------------------------------------------------------- pointer -> line

namespace {

std::string escape(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

class LineScanner {
 public:
  explicit LineScanner(const std::string& text) : text_(text) {}

  std::map<std::string, int> scan() {
    skip();
    value("");
    return lines_;
  }

 private:
  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }
  std::string string() {
    std::string out;
    ++pos_;  // opening quote
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) {
        out += text_[pos_ + 1];
        pos_ += 2;
        continue;
      }
      out += text_[pos_++];
    }
    ++pos_;
    return out;
  }
  void value(const std::string& pointer) {
    skip();
    if (pos_ >= text_.size()) return;
    lines_.emplace(pointer, line_);
    const char c = text_[pos_];
    if (c == '{') {
      ++pos_;
      skip();
      while (pos_ < text_.size() && text_[pos_] != '}') {
        const std::string key = string();
        skip();
        ++pos_;  // ':'
        value(pointer + "/" + escape(key));
        skip();
        if (pos_ < text_.size() && text_[pos_] == ',') ++pos_;
        skip();
      }
      ++pos_;
    } else if (c == '[') {
      ++pos_;
      skip();
      std::size_t i = 0;
      while (pos_ < text_.size() && text_[pos_] != ']') {
        value(pointer + "/" + std::to_string(i++));
        skip();
        if (pos_ < text_.size() && text_[pos_] == ',') ++pos_;
        skip();
      }
      ++pos_;
    } else if (c == '"') {
      string();
    } else {
      while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != '}' && text_[pos_] != ']' &&
             !std::isspace(static_cast<unsigned char>(text_[pos_])))
        ++pos_;
    }
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

}  // namespace

int line_of(const std::string& text, const std::string& pointer) {
  if (!json::accept(text)) return 0;
  const auto lines = LineScanner(text).scan();
  // walk up to the nearest existing ancestor
  std::string p = pointer;
  while (true) {
    if (auto it = lines.find(p); it != lines.end()) return it->second;
    if (p.empty()) return 0;
    p = p.substr(0, p.rfind('/'));
  }
}

// ---------------------------------------------------------------- checker

namespace {

class Checker {
 public:
  Checker(const std::string& text, std::vector<Diagnostic>& out)
      : lines_(LineScanner(text).scan()), out_(out) {}

  void error(const std::string& pointer, std::string message) {
    std::string p = pointer;
    int line = 0;
    while (true) {
      if (auto it = lines_.find(p); it != lines_.end()) {
        line = it->second;
        break;
      }
      if (p.empty()) break;
      p = p.substr(0, p.rfind('/'));
    }
    out_.push_back({pointer, line, std::move(message)});
  }
  std::size_t count() const { return out_.size(); }

  void keys(const json& obj, const std::string& ptr, std::initializer_list<const char*> allowed) {
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!ok.count(it.key())) error(ptr + "/" + escape(it.key()), "unknown key '" + it.key() + "'");
  }

  const json* object(const json& parent, const std::string& ptr, const char* key, bool required) {
    if (!parent.contains(key)) {
      if (required) error(ptr, fmt::format("missing required block '{}'", key));
      return nullptr;
    }
    const json& v = parent.at(key);
    if (!v.is_object()) {
      error(ptr + "/" + key, "must be an object");
      return nullptr;
    }
    return &v;
  }

  std::optional<double> number(const json& obj, const std::string& ptr, const char* key,
                               std::optional<double> fallback) {
    if (!obj.contains(key)) {
      if (!fallback) error(ptr, fmt::format("missing required number '{}'", key));
      return fallback;
    }
    const json& v = obj.at(key);
    if (!v.is_number() || !std::isfinite(v.get<double>())) {
      error(ptr + "/" + key, "must be a finite number");
      return std::nullopt;
    }
    return v.get<double>();
  }

  std::optional<double> positive(const json& obj, const std::string& ptr, const char* key,
                                 std::optional<double> fallback) {
    auto v = number(obj, ptr, key, fallback);
    if (v && !(*v > 0.0)) {
      error(ptr + "/" + key, fmt::format("{} must be positive (got {})", key, *v));
      return std::nullopt;
    }
    return v;
  }

  std::optional<std::size_t> count(const json& obj, const std::string& ptr, const char* key,
                                   std::optional<std::size_t> fallback, std::size_t min = 1) {
    if (!obj.contains(key)) {
      if (!fallback) error(ptr, fmt::format("missing required integer '{}'", key));
      return fallback;
    }
    const json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min)) {
      error(ptr + "/" + key, fmt::format("{} must be an integer >= {}", key, min));
      return std::nullopt;
    }
    return v.get<std::size_t>();
  }

  std::optional<std::string> text(const json& obj, const std::string& ptr, const char* key,
                                  std::optional<std::string> fallback) {
    if (!obj.contains(key)) {
      if (!fallback) error(ptr, fmt::format("missing required string '{}'", key));
      return fallback;
    }
    const json& v = obj.at(key);
    if (!v.is_string()) {
      error(ptr + "/" + key, "must be a string");
      return std::nullopt;
    }
    return v.get<std::string>();
  }

  std::optional<expr::Expression> expression(const std::string& text, const std::string& ptr,
                                             const std::vector<std::string>& coords, bool allow_time = false) {
    try {
      auto e = expr::Expression::parse(text, coords);
      if (!allow_time && e.depends_on_time()) {
        error(ptr, "expression must not depend on t");
        return std::nullopt;
      }
      return e;
    } catch (const Error& err) {
      error(ptr, fmt::format("invalid expression '{}': {}", text, err.what()));
      return std::nullopt;
    }
  }

 private:
  std::map<std::string, int> lines_;
  std::vector<Diagnostic>& out_;
};

std::optional<Experiment> parse_experiment(const std::string& s) {
  static const std::map<std::string, Experiment> kinds{
      {"propagate", Experiment::propagate},         {"trajectories", Experiment::trajectories},
      {"ensemble", Experiment::ensemble},           {"double_slit", Experiment::double_slit},
      {"measure_angular", Experiment::measure_angular}, {"measure_position", Experiment::measure_position},
      {"classical", Experiment::classical},         {"verify", Experiment::verify}};
  if (auto it = kinds.find(s); it != kinds.end()) return it->second;
  return std::nullopt;
}

std::optional<Axis> parse_axis(Checker& c, const json& a, const std::string& ptr) {
  if (!a.is_object()) {
    c.error(ptr, "axis must be an object");
    return std::nullopt;
  }
  c.keys(a, ptr, {"min", "max", "points", "boundary"});
  const auto mn = c.number(a, ptr, "min", std::nullopt);
  const auto mx = c.number(a, ptr, "max", std::nullopt);
  const auto pts = c.count(a, ptr, "points", std::nullopt, 3);
  const auto b = c.text(a, ptr, "boundary", std::string("box"));
  if (!mn || !mx || !pts || !b) return std::nullopt;
  if (!(*mx > *mn)) {
    c.error(ptr + "/max", "max must exceed min");
    return std::nullopt;
  }
  Boundary bd;
  if (*b == "box") bd = Boundary::box;
  else if (*b == "periodic") bd = Boundary::periodic;
  else {
    c.error(ptr + "/boundary", fmt::format("unknown boundary '{}' (expected box or periodic)", *b));
    return std::nullopt;
  }
  return Axis{*mn, *mx, *pts, bd};
}

void parse_system(Checker& c, const json& root, RunConfig& cfg, bool required) {
  const json* sys = c.object(root, "", "system", required);
  if (sys == nullptr) return;
  const std::string p = "/system";
  c.keys(*sys, p, {"coordinates", "mass", "metric_inverse", "vector_potential", "scalar_potential"});
  if (!sys->contains("coordinates") || !sys->at("coordinates").is_array() || sys->at("coordinates").empty()) {
    c.error(p + "/coordinates", "coordinates must be a non-empty array of names");
    return;
  }
  std::vector<std::string> coords;
  for (std::size_t i = 0; i < sys->at("coordinates").size(); ++i) {
    const json& n = sys->at("coordinates")[i];
    if (!n.is_string()) c.error(fmt::format("{}/coordinates/{}", p, i), "coordinate names must be strings");
    else coords.push_back(n.get<std::string>());
  }
  if (coords.size() != sys->at("coordinates").size()) return;
  // reject reserved or malformed names through the parser itself
  try {
    (void)expr::Expression::parse("0", coords);
  } catch (const Error& e) {
    c.error(p + "/coordinates", e.what());
    return;
  }
  const std::size_t n = coords.size();
  cfg.system.coordinates = coords;

  std::vector<std::vector<std::optional<expr::Expression>>> metric(n, std::vector<std::optional<expr::Expression>>(n));
  if (sys->contains("metric_inverse")) {
    if (sys->contains("mass")) c.error(p + "/mass", "give either mass or metric_inverse, not both");
    const json& g = sys->at("metric_inverse");
    if (!g.is_array() || g.size() != n) {
      c.error(p + "/metric_inverse", fmt::format("metric_inverse must be a {}x{} array of expressions", n, n));
      return;
    }
    cfg.system.metric_inverse.assign(n, std::vector<std::string>(n));
    for (std::size_t i = 0; i < n; ++i) {
      if (!g[i].is_array() || g[i].size() != n) {
        c.error(fmt::format("{}/metric_inverse/{}", p, i), fmt::format("row must have {} entries", n));
        return;
      }
      for (std::size_t j = 0; j < n; ++j) {
        const std::string ptr = fmt::format("{}/metric_inverse/{}/{}", p, i, j);
        if (!g[i][j].is_string()) {
          c.error(ptr, "entries must be expression strings");
          continue;
        }
        cfg.system.metric_inverse[i][j] = g[i][j].get<std::string>();
        metric[i][j] = c.expression(cfg.system.metric_inverse[i][j], ptr, coords);
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (metric[i][j] && metric[j][i] && !(*metric[i][j] == *metric[j][i]))
          c.error(fmt::format("{}/metric_inverse/{}/{}", p, i, j),
                  fmt::format("metric_inverse is not symmetric: entry ({}, {}) differs from ({}, {})", i, j, j, i));
  } else {
    const auto mass = c.positive(*sys, p, "mass", 1.0);
    if (!mass) return;
    cfg.system.metric_inverse.assign(n, std::vector<std::string>(n, "0"));
    for (std::size_t i = 0; i < n; ++i) cfg.system.metric_inverse[i][i] = fmt::format("{:.17g}", 1.0 / *mass);
  }

  cfg.system.vector_potential.assign(n, "0");
  if (sys->contains("vector_potential")) {
    const json& a = sys->at("vector_potential");
    if (!a.is_array() || a.size() != n) {
      c.error(p + "/vector_potential", fmt::format("vector_potential must list {} expressions", n));
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const std::string ptr = fmt::format("{}/vector_potential/{}", p, i);
        if (!a[i].is_string()) c.error(ptr, "must be an expression string");
        else {
          cfg.system.vector_potential[i] = a[i].get<std::string>();
          c.expression(cfg.system.vector_potential[i], ptr, coords);
        }
      }
    }
  }
  if (auto v = c.text(*sys, p, "scalar_potential", std::string("0"))) {
    cfg.system.scalar_potential = *v;
    c.expression(*v, p + "/scalar_potential", coords);
  }
}

void parse_distribution(Checker& c, const json& root, RunConfig& cfg) {
  const json* d = c.object(root, "", "distribution", false);
  if (d == nullptr) return;
  const std::string p = "/distribution";
  const auto kind = c.text(*d, p, "kind", std::nullopt);
  if (!kind) return;
  const auto hbar = c.positive(*d, p, "hbar", 1.0);
  if (!hbar) return;
  try {
    if (*kind == "binary") {
      c.keys(*d, p, {"kind", "hbar"});
      cfg.distribution = LambdaDistribution::binary(*hbar);
    } else if (*kind == "lognormal") {
      c.keys(*d, p, {"kind", "hbar", "sigma"});
      const auto sigma = c.number(*d, p, "sigma", std::nullopt);
      if (sigma && *sigma < 0.0) c.error(p + "/sigma", "sigma must be non-negative");
      else if (sigma) cfg.distribution = LambdaDistribution::lognormal(*sigma, *hbar);
    } else if (*kind == "table") {
      c.keys(*d, p, {"kind", "hbar", "rows"});
      if (!d->contains("rows") || !d->at("rows").is_array() || d->at("rows").empty()) {
        c.error(p + "/rows", "table needs a non-empty array of [|lambda|, weight] rows");
        return;
      }
      std::vector<std::pair<double, double>> rows;
      const json& r = d->at("rows");
      for (std::size_t i = 0; i < r.size(); ++i) {
        const std::string ptr = fmt::format("{}/rows/{}", p, i);
        if (!r[i].is_array() || r[i].size() != 2 || !r[i][0].is_number() || !r[i][1].is_number()) {
          c.error(ptr, "row must be [|lambda|, weight]");
          return;
        }
        if (!(r[i][0].get<double>() > 0.0)) {
          c.error(ptr, "|lambda| must be positive");
          return;
        }
        if (!(r[i][1].get<double>() >= 0.0)) {
          c.error(ptr, "weight must be non-negative");
          return;
        }
        rows.emplace_back(r[i][0].get<double>(), r[i][1].get<double>());
      }
      cfg.distribution = LambdaDistribution::table(rows, *hbar);
    } else {
      c.error(p + "/kind", fmt::format("unknown distribution kind '{}' (expected binary, lognormal or table)", *kind));
    }
  } catch (const Error& e) {
    c.error(p, e.what());
  }
}

void parse_numerics(Checker& c, const json& root, RunConfig& cfg) {
  const json* nb = c.object(root, "", "numerics", false);
  if (nb == nullptr) return;
  const std::string p = "/numerics";
  auto& n = cfg.numerics;
  c.keys(*nb, p, {"dt", "t_final", "snapshot_every", "n_particles", "n_lambda_nodes", "seed", "substeps",
                  "lambda", "sampling", "born_coarsen", "export_particles"});
  const std::size_t before = c.count();
  if (auto v = c.positive(*nb, p, "dt", n.dt)) n.dt = *v;
  if (auto v = c.positive(*nb, p, "t_final", n.t_final)) n.t_final = *v;
  if (c.count() == before) {
    if (n.t_final < n.dt) c.error(p + "/t_final", "t_final must be at least dt");
    else {
      try {
        step_count(n.t_final, n.dt);
      } catch (const Error& e) {
        c.error(p + "/dt", e.what());
      }
    }
  }
  if (auto v = c.count(*nb, p, "snapshot_every", n.snapshot_every)) n.snapshot_every = *v;
  if (auto v = c.count(*nb, p, "n_particles", n.n_particles)) n.n_particles = *v;
  if (auto v = c.count(*nb, p, "n_lambda_nodes", n.n_lambda_nodes)) n.n_lambda_nodes = *v;
  if (auto v = c.count(*nb, p, "seed", n.seed, 0)) n.seed = *v;
  if (auto v = c.count(*nb, p, "substeps", n.substeps)) n.substeps = *v;
  if (auto v = c.count(*nb, p, "born_coarsen", n.born_coarsen)) n.born_coarsen = *v;
  if (auto v = c.count(*nb, p, "export_particles", n.export_particles, 0)) n.export_particles = *v;
  if (nb->contains("lambda")) {
    auto v = c.number(*nb, p, "lambda", std::nullopt);
    if (v && *v == 0.0) c.error(p + "/lambda", "lambda must be non-zero");
    else if (v) n.lambda = *v;
  }
  if (auto s = c.text(*nb, p, "sampling", std::string("iid"))) {
    if (*s == "iid") n.sampling = Sampling::iid;
    else if (*s == "stratified") n.sampling = Sampling::stratified;
    else c.error(p + "/sampling", fmt::format("unknown sampling '{}' (expected iid or stratified)", *s));
  }
}

void parse_initial(Checker& c, const json& root, RunConfig& cfg, bool required) {
  const json* ib = c.object(root, "", "initial", required);
  if (ib == nullptr) return;
  const std::string p = "/initial";
  c.keys(*ib, p, {"amplitude", "phase", "action", "normalize"});
  auto& in = cfg.initial;
  if (auto v = c.text(*ib, p, "amplitude", std::nullopt)) in.amplitude = *v;
  if (auto v = c.text(*ib, p, "phase", std::string("0"))) in.phase = *v;
  if (auto v = c.text(*ib, p, "action", std::string())) in.action = *v;
  if (ib->contains("phase") && ib->contains("action")) c.error(p + "/action", "give either phase or action, not both");
  if (ib->contains("normalize")) {
    if (!ib->at("normalize").is_boolean()) c.error(p + "/normalize", "must be true or false");
    else in.normalize = ib->at("normalize").get<bool>();
  }
  const auto& coords = cfg.system.coordinates;
  if (coords.empty()) return;
  if (!in.amplitude.empty()) c.expression(in.amplitude, p + "/amplitude", coords);
  c.expression(in.phase, p + "/phase", coords);
  if (!in.action.empty()) c.expression(in.action, p + "/action", coords);
}

void parse_measurement(Checker& c, const json& root, RunConfig& cfg) {
  const bool angular = cfg.experiment == Experiment::measure_angular;
  const json* mb = c.object(root, "", "measurement", angular || cfg.experiment == Experiment::measure_position);
  if (mb == nullptr) return;
  const std::string p = "/measurement";
  auto& m = cfg.measurement;
  c.keys(*mb, p, {"coupling", "duration", "components", "pointer", "min_separation", "sigma_sweep"});
  if (auto v = c.number(*mb, p, "coupling", 1.0)) m.coupling = *v;
  if (auto v = c.positive(*mb, p, "duration", 1.0)) m.duration = *v;
  if (auto v = c.number(*mb, p, "min_separation", 0.0)) m.min_separation = *v;
  if (!angular) return;
  if (!mb->contains("components") || !mb->at("components").is_array() || mb->at("components").empty()) {
    c.error(p + "/components", "components must be a non-empty array of {l, re, im}");
  } else {
    const json& comps = mb->at("components");
    double total = 0.0;
    bool complete = true;
    for (std::size_t i = 0; i < comps.size(); ++i) {
      const std::string ptr = fmt::format("{}/components/{}", p, i);
      if (!comps[i].is_object()) {
        c.error(ptr, "component must be an object");
        complete = false;
        continue;
      }
      c.keys(comps[i], ptr, {"l", "re", "im"});
      const auto l = c.number(comps[i], ptr, "l", std::nullopt);
      const auto re = c.number(comps[i], ptr, "re", 0.0);
      const auto im = c.number(comps[i], ptr, "im", 0.0);
      if (!l || !re || !im) {
        complete = false;
        continue;
      }
      m.components.push_back({*l, complex(*re, *im)});
      total += *re * *re + *im * *im;
    }
    if (complete && std::abs(total - 1.0) > 1e-12)
      c.error(p + "/components", fmt::format("sum of |c_l|^2 is {} (must be 1 within 1e-12)", total));
  }
  if (const json* pb = c.object(*mb, p, "pointer", false)) {
    const std::string pp = p + "/pointer";
    c.keys(*pb, pp, {"min", "max", "points", "boundary", "center", "width"});
    json axis = json::object();
    for (const char* k : {"min", "max", "points", "boundary"})
      if (pb->contains(k)) axis[k] = pb->at(k);
    for (const char* k : {"min", "max", "points"})
      if (!axis.contains(k)) {
        c.error(pp, fmt::format("missing required '{}'", k));
        return;
      }
    if (auto a = parse_axis(c, axis, pp)) m.pointer_axis = *a;
    if (auto v = c.number(*pb, pp, "center", 0.0)) m.pointer_center = *v;
    if (auto v = c.positive(*pb, pp, "width", 0.5)) m.pointer_width = *v;
  }
  if (mb->contains("sigma_sweep")) {
    const json& s = mb->at("sigma_sweep");
    if (!s.is_array()) c.error(p + "/sigma_sweep", "must be an array of sigma values");
    else
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (!s[i].is_number() || s[i].get<double>() < 0.0)
          c.error(fmt::format("{}/sigma_sweep/{}", p, i), "sigma must be a non-negative number");
        else m.sigma_sweep.push_back(s[i].get<double>());
      }
  }
}

void parse_double_slit(Checker& c, const json& root, RunConfig& cfg) {
  const json* b = c.object(root, "", "double_slit", false);
  if (b == nullptr) return;
  const std::string p = "/double_slit";
  c.keys(*b, p, {"mass", "separation", "width", "momentum", "central_half_width", "sigma_sweep"});
  auto& d = cfg.double_slit;
  if (auto v = c.positive(*b, p, "mass", d.mass)) d.mass = *v;
  if (b->contains("sigma_sweep")) {
    const json& s = b->at("sigma_sweep");
    if (!s.is_array()) c.error(p + "/sigma_sweep", "must be an array of sigma values");
    else
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (!s[i].is_number() || s[i].get<double>() < 0.0)
          c.error(fmt::format("{}/sigma_sweep/{}", p, i), "sigma must be a non-negative number");
        else d.sigma_sweep.push_back(s[i].get<double>());
      }
  }
  if (auto v = c.positive(*b, p, "separation", d.separation)) d.separation = *v;
  if (auto v = c.positive(*b, p, "width", d.width)) d.width = *v;
  if (auto v = c.number(*b, p, "momentum", d.momentum)) d.momentum = *v;
  if (auto v = c.positive(*b, p, "central_half_width", d.central_half_width)) d.central_half_width = *v;
}

void parse_verify(Checker& c, const json& root, RunConfig& cfg) {
  const json* b = c.object(root, "", "verify", false);
  if (b == nullptr) return;
  const std::string p = "/verify";
  c.keys(*b, p, {"refinements", "checks", "support_floor", "margin"});
  auto& v = cfg.verify;
  if (auto x = c.count(*b, p, "refinements", v.refinements)) v.refinements = *x;
  if (auto x = c.positive(*b, p, "support_floor", v.support_floor)) v.support_floor = *x;
  if (auto x = c.count(*b, p, "margin", v.margin, 0)) v.margin = *x;
  if (b->contains("checks")) {
    const json& ch = b->at("checks");
    v.checks.clear();
    if (!ch.is_array()) c.error(p + "/checks", "must be an array");
    else
      for (std::size_t i = 0; i < ch.size(); ++i) {
        const std::string name = ch[i].is_string() ? ch[i].get<std::string>() : "";
        if (name != "identity" && name != "hjm" && name != "continuity" && name != "symmetry")
          c.error(fmt::format("{}/checks/{}", p, i), "unknown check (expected identity, hjm, continuity or symmetry)");
        else v.checks.push_back(name);
      }
  }
}

void parse_assertions(Checker& c, const json& root, RunConfig& cfg) {
  const json* b = c.object(root, "", "assertions", false);
  if (b == nullptr) return;
  const std::string p = "/assertions";
  c.keys(*b, p, {"max_norm_drift", "max_energy_drift", "max_born_distance", "max_position_difference",
                 "max_marginal_mass_error", "convergence_ratio_min", "convergence_ratio_max", "max_residual",
                 "max_mean_gap"});
  auto& a = cfg.assertions;
  if (auto v = c.positive(*b, p, "max_norm_drift", a.max_norm_drift)) a.max_norm_drift = *v;
  if (auto v = c.positive(*b, p, "max_energy_drift", a.max_energy_drift)) a.max_energy_drift = *v;
  if (auto v = c.positive(*b, p, "max_born_distance", a.max_born_distance)) a.max_born_distance = *v;
  if (auto v = c.positive(*b, p, "max_position_difference", a.max_position_difference)) a.max_position_difference = *v;
  if (auto v = c.positive(*b, p, "max_marginal_mass_error", a.max_marginal_mass_error)) a.max_marginal_mass_error = *v;
  if (auto v = c.positive(*b, p, "convergence_ratio_min", a.convergence_ratio_min)) a.convergence_ratio_min = *v;
  if (auto v = c.positive(*b, p, "convergence_ratio_max", a.convergence_ratio_max)) a.convergence_ratio_max = *v;
  if (b->contains("max_residual"))
    if (auto v = c.positive(*b, p, "max_residual", std::nullopt)) a.max_residual = *v;
  if (b->contains("max_mean_gap"))
    if (auto v = c.positive(*b, p, "max_mean_gap", std::nullopt)) a.max_mean_gap = *v;
}

void parse_output(Checker& c, const json& root, RunConfig& cfg) {
  const json* b = c.object(root, "", "output", false);
  if (b == nullptr) return;
  const std::string p = "/output";
  c.keys(*b, p, {"directory", "formats"});
  if (auto v = c.text(*b, p, "directory", cfg.output.directory)) {
    if (v->empty()) c.error(p + "/directory", "directory must not be empty");
    else cfg.output.directory = *v;
  }
  if (b->contains("formats")) {
    const json& f = b->at("formats");
    cfg.output.csv = cfg.output.json = cfg.output.snapshot = false;
    if (!f.is_array()) {
      c.error(p + "/formats", "must be an array of csv, json, snapshot");
      return;
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
      const std::string name = f[i].is_string() ? f[i].get<std::string>() : "";
      if (name == "csv") cfg.output.csv = true;
      else if (name == "json") cfg.output.json = true;
      else if (name == "snapshot") cfg.output.snapshot = true;
      else c.error(fmt::format("{}/formats/{}", p, i), "unknown format (expected csv, json or snapshot)");
    }
  }
}

void check_grid(Checker& c, const json& root, RunConfig& cfg, bool required) {
  const json* gb = c.object(root, "", "grid", required);
  if (gb == nullptr) return;
  c.keys(*gb, "/grid", {"axes"});
  if (!gb->contains("axes") || !gb->at("axes").is_array() || gb->at("axes").empty()) {
    c.error("/grid/axes", "axes must be a non-empty array");
    return;
  }
  const json& axes = gb->at("axes");
  bool complete = true;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (auto a = parse_axis(c, axes[i], fmt::format("/grid/axes/{}", i))) cfg.axes.push_back(*a);
    else complete = false;
  }
  if (!complete) return;
  try {
    (void)Grid(cfg.axes);
  } catch (const Error& e) {
    c.error("/grid/axes", e.what());
    return;
  }
  if (!cfg.system.coordinates.empty() && cfg.system.coordinates.size() != cfg.axes.size())
    c.error("/grid/axes", fmt::format("grid has {} axes but the system declares {} coordinates", cfg.axes.size(),
                                      cfg.system.coordinates.size()));
}

}  // namespace

Validation validate_text(const std::string& text) {
  Validation out;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    int line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()) && i + 1 < e.byte; ++i)
      if (text[i] == '\n') ++line;
    out.diagnostics.push_back({"", line, fmt::format("JSON syntax error: {}", e.what())});
    return out;
  }
  Checker c(text, out.diagnostics);
  if (!root.is_object()) {
    c.error("", "configuration must be a JSON object");
    return out;
  }
  c.keys(root, "", {"experiment", "system", "grid", "initial", "distribution", "numerics", "measurement",
                    "double_slit", "verify", "assertions", "output"});
  RunConfig cfg;
  cfg.echo = root;
  const auto kind = c.text(root, "", "experiment", std::nullopt);
  if (kind) {
    if (auto e = parse_experiment(*kind)) cfg.experiment = *e;
    else {
      c.error("/experiment", fmt::format("unknown experiment kind '{}'", *kind));
      return out;
    }
  } else {
    return out;
  }
  const Experiment e = cfg.experiment;
  const bool needs_system = e != Experiment::measure_angular && e != Experiment::double_slit;
  const bool needs_grid = e != Experiment::measure_angular;
  const bool needs_initial = needs_system;
  parse_system(c, root, cfg, needs_system);
  check_grid(c, root, cfg, needs_grid);
  parse_distribution(c, root, cfg);
  parse_numerics(c, root, cfg);
  parse_initial(c, root, cfg, needs_initial);
  parse_measurement(c, root, cfg);
  parse_double_slit(c, root, cfg);
  parse_verify(c, root, cfg);
  parse_assertions(c, root, cfg);
  parse_output(c, root, cfg);

  if (e == Experiment::measure_position && out.diagnostics.empty()) {
    try {
      step_count(cfg.measurement.duration, cfg.numerics.dt);
    } catch (const Error& err) {
      c.error("/measurement/duration", err.what());
    }
  }
  if (e == Experiment::measure_position && cfg.axes.size() != 2 && !cfg.axes.empty())
    c.error("/grid/axes", "measure_position needs exactly two axes (q1, q2)");
  if (e == Experiment::measure_position && cfg.axes.size() == 2 && cfg.axes[1].boundary != Boundary::box)
    c.error("/grid/axes/1/boundary", "the pointer axis must be a box axis");
  if (e == Experiment::double_slit && !cfg.axes.empty() && cfg.axes.size() != 1)
    c.error("/grid/axes", "double_slit needs a single axis");
  if (e == Experiment::classical && !cfg.initial.phase.empty() && cfg.initial.phase != "0" && cfg.initial.action.empty())
    c.error("/initial/phase", "classical runs take the initial phase as an action; use 'action'");
  if (needs_system && out.diagnostics.empty()) {
    try {
      const ClassicalSystem sys = build_system(cfg);
      (void)evaluate_coefficients(sys, Grid(cfg.axes));
    } catch (const DomainError& err) {
      c.error("/system", err.what());
    } catch (const Error& err) {
      c.error("/system", err.what());
    }
  }
  if (out.diagnostics.empty()) out.config = std::move(cfg);
  return out;
}

Validation validate_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    Validation v;
    v.diagnostics.push_back({"", 0, fmt::format("cannot open config file '{}'", path)});
    return v;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return validate_text(ss.str());
}

ClassicalSystem build_system(const RunConfig& cfg) {
  return ClassicalSystem::parse(cfg.system.coordinates, cfg.system.metric_inverse, cfg.system.vector_potential,
                                cfg.system.scalar_potential);
}

}  // namespace hvq::cli
