#include "spechomog/config.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

using nlohmann::json;

namespace spechomog::cli {

namespace {

enum class Type { Object, Number, Integer, String, Boolean, NumberArray, IntegerArray, PointList };

// One field of the configuration schema. A null default on a leaf means
// "derived after the dimension is known" (or optional when `nullable`).
struct Field {
  std::string key;
  Type type = Type::Number;
  json def;
  std::string doc;
  std::vector<Field> props;
  std::optional<double> exclusive_min;
  std::optional<double> minimum;
  std::optional<double> maximum;
  std::vector<std::string> choices;
  bool nullable = false;
};

Field obj(std::string key, std::string doc, std::vector<Field> props) {
  Field f;
  f.key = std::move(key);
  f.type = Type::Object;
  f.doc = std::move(doc);
  f.props = std::move(props);
  f.def = json::object();
  return f;
}

Field leaf(std::string key, Type type, json def, std::string doc) {
  Field f;
  f.key = std::move(key);
  f.type = type;
  f.def = std::move(def);
  f.doc = std::move(doc);
  return f;
}

Field positive(Field f) {
  f.exclusive_min = 0.0;
  return f;
}

Field at_least(Field f, double m) {
  f.minimum = m;
  return f;
}

Field nullable(Field f) {
  f.nullable = true;
  return f;
}

const Field& schema_tree() {
  static const Field root = [] {
    Field kernel_type = leaf("type", Type::String, "gaussian", "dispersal kernel family");
    kernel_type.choices = {"gaussian", "lattice_gaussian", "custom"};
    Field dim = leaf("dimension", Type::Integer, 1, "spatial dimension d");
    dim.minimum = 1;
    dim.maximum = 3;
    Field k = leaf("k", Type::Integer, 3, "number of eigenvalues");
    k.minimum = 1;
    k.maximum = 8;

    return obj("", "spechomog run configuration",
               {
                   obj("model", "periodic-in-xi model on a box",
                       {
                           dim,
                           obj("domain", "box Omega",
                               {
                                   nullable(leaf("lower", Type::NumberArray, nullptr, "lower corner (default 0)")),
                                   nullable(leaf("upper", Type::NumberArray, nullptr, "upper corner (default 1)")),
                               }),
                           obj("kernel", "dispersal kernel J",
                               {
                                   kernel_type,
                                   positive(leaf("sigma", Type::Number, 1.0, "gaussian width")),
                                   positive(leaf("mu", Type::Number, 1.0, "lattice gaussian mass per period")),
                                   leaf("expression", Type::String, "", "custom kernel in z1..zd"),
                                   nullable(positive(leaf("decay_C", Type::Number, nullptr,
                                                          "C in J(z) <= C exp(-|z|^(1+beta)); derived if null"))),
                                   positive(leaf("decay_beta", Type::Number, 0.5, "beta of the decay bound")),
                               }),
                           leaf("kappa", Type::String, "1", "kappa(x, y, xi, eta)"),
                           leaf("a", Type::String, "2", "a(x, xi)"),
                       }),
                   obj("grids", "discretization sizes",
                       {
                           at_least(leaf("torus_n", Type::Integer, 128, "cell torus points per axis (power of two)"), 4),
                           at_least(leaf("direct_q", Type::Integer, 8, "direct grid points per period"), 1),
                           nullable(leaf("effective_N", Type::IntegerArray, nullptr,
                                         "interior nodes per axis of the effective grid (default 127)")),
                           nullable(leaf("hj_x_counts", Type::IntegerArray, nullptr,
                                         "HJ table x nodes per axis, boundary included (default 33)")),
                           positive(leaf("hj_p_max", Type::Number, 1.5, "HJ table p range")),
                           at_least(leaf("hj_p_count", Type::Integer, 31, "HJ table p nodes per axis"), 3),
                           at_least(leaf("hj_torus_n", Type::Integer, 64, "torus points for HJ table entries"), 4),
                           at_least(leaf("dense_max", Type::Integer, 2000, "node limit for dense oracles"), 1),
                       }),
                   obj("tolerances", "solver tolerances",
                       {
                           positive(leaf("eigen", Type::Number, 1e-10, "eigen residual")),
                           positive(leaf("truncation", Type::Number, 1e-10, "kernel tail")),
                           nullable(positive(leaf("classification", Type::Number, nullptr,
                                                  "essential-bottom gap threshold; 10 eigen (1+|m|) if null"))),
                           positive(leaf("corrector", Type::Number, 1e-12, "corrector GMRES")),
                           positive(leaf("hj", Type::Number, 1e-10, "HJ scheme residual")),
                           positive(leaf("delta", Type::Number, 0.05, "regularization delta")),
                           at_least(leaf("max_iter", Type::Integer, 2000000, "power iteration cap"), 1),
                       }),
                   obj("experiment", "experiment parameters",
                       {
                           nullable(leaf("p_list", Type::PointList, nullptr, "cell-h p values (default -1, 0, 1 on axis 1)")),
                           nullable(leaf("x", Type::NumberArray, nullptr, "slow point for cell problems (default centre)")),
                           leaf("eps_list", Type::NumberArray, json::array({0.125, 0.0625, 0.03125}), "eps = 1/K values"),
                           k,
                           leaf("f", Type::String, "sin(pi*x1)", "resolvent right-hand side in x1..xd"),
                       }),
                   leaf("output", Type::String, "results", "output directory"),
               });
  }();
  return root;
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

void check_number(const Field& f, const json& v, const std::string& path) {
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(path, "must be finite");
  if (f.exclusive_min && !(x > *f.exclusive_min)) fail(path, "must be > " + std::to_string(*f.exclusive_min));
  if (f.minimum && x < *f.minimum) fail(path, "must be >= " + std::to_string(*f.minimum));
  if (f.maximum && x > *f.maximum) fail(path, "must be <= " + std::to_string(*f.maximum));
}

void fill(const Field& f, json& v, const std::string& path) {
  if (v.is_null() && f.nullable) return;
  switch (f.type) {
    case Type::Object: {
      if (!v.is_object()) fail(path.empty() ? "(root)" : path, "expected an object");
      for (auto it = v.begin(); it != v.end(); ++it) {
        bool known = false;
        for (const auto& p : f.props) known |= p.key == it.key();
        if (!known) throw ConfigError(join(path, it.key()) + ": unknown key '" + it.key() + "'");
      }
      for (const auto& p : f.props) {
        if (!v.contains(p.key)) v[p.key] = p.def;
        fill(p, v[p.key], join(path, p.key));
      }
      return;
    }
    case Type::Number:
      if (!v.is_number()) fail(path, "expected a number");
      check_number(f, v, path);
      return;
    case Type::Integer:
      if (!v.is_number_integer()) fail(path, "expected an integer");
      check_number(f, v, path);
      return;
    case Type::String:
      if (!v.is_string()) fail(path, "expected a string");
      if (!f.choices.empty()) {
        bool ok = false;
        for (const auto& c : f.choices) ok |= v.get<std::string>() == c;
        if (!ok) fail(path, "unsupported value '" + v.get<std::string>() + "'");
      }
      return;
    case Type::Boolean:
      if (!v.is_boolean()) fail(path, "expected true or false");
      return;
    case Type::NumberArray:
    case Type::IntegerArray:
      if (!v.is_array() || v.empty()) fail(path, "expected a non-empty array");
      for (std::size_t i = 0; i < v.size(); ++i) {
        const auto p = path + "[" + std::to_string(i) + "]";
        if (f.type == Type::IntegerArray ? !v[i].is_number_integer() : !v[i].is_number())
          fail(p, f.type == Type::IntegerArray ? "expected an integer" : "expected a number");
        if (!std::isfinite(v[i].get<double>())) fail(p, "must be finite");
      }
      return;
    case Type::PointList:
      if (!v.is_array() || v.empty()) fail(path, "expected a non-empty array");
      for (std::size_t i = 0; i < v.size(); ++i) {
        const auto p = path + "[" + std::to_string(i) + "]";
        if (v[i].is_number()) continue;
        if (!v[i].is_array() || v[i].empty()) fail(p, "expected a number or an array of numbers");
        for (const auto& c : v[i])
          if (!c.is_number()) fail(p, "expected numbers");
      }
      return;
  }
}

json schema_of(const Field& f) {
  json s;
  if (!f.doc.empty()) s["description"] = f.doc;
  auto typed = [&](json t) {
    if (f.nullable) return json::array({t, "null"});
    return t;
  };
  switch (f.type) {
    case Type::Object: {
      s["type"] = "object";
      s["additionalProperties"] = false;
      json props = json::object();
      for (const auto& p : f.props) props[p.key] = schema_of(p);
      s["properties"] = props;
      return s;
    }
    case Type::Number:
    case Type::Integer:
      s["type"] = typed(f.type == Type::Number ? "number" : "integer");
      if (f.exclusive_min) s["exclusiveMinimum"] = *f.exclusive_min;
      if (f.minimum) s["minimum"] = *f.minimum;
      if (f.maximum) s["maximum"] = *f.maximum;
      break;
    case Type::String:
      s["type"] = typed("string");
      if (!f.choices.empty()) s["enum"] = f.choices;
      break;
    case Type::Boolean:
      s["type"] = typed("boolean");
      break;
    case Type::NumberArray:
    case Type::IntegerArray:
      s["type"] = typed("array");
      s["minItems"] = 1;
      s["items"] = {{"type", f.type == Type::NumberArray ? "number" : "integer"}};
      break;
    case Type::PointList:
      s["type"] = typed("array");
      s["minItems"] = 1;
      s["items"] = {{"oneOf", json::array({{{"type", "number"}},
                                           {{"type", "array"}, {"items", {{"type", "number"}}}, {"minItems", 1}}})}};
      break;
  }
  if (!f.def.is_null()) s["default"] = f.def;
  return s;
}

std::vector<double> numbers(const json& v) { return v.get<std::vector<double>>(); }

Point point_of(const json& v, int d, const std::string& path) {
  Point p{};
  if (v.is_number()) {
    if (d != 1) fail(path, "expected an array of " + std::to_string(d) + " numbers");
    p[0] = v.get<double>();
    return p;
  }
  if (static_cast<int>(v.size()) != d) fail(path, "expected " + std::to_string(d) + " components");
  for (int a = 0; a < d; ++a) p[a] = v[a].get<double>();
  return p;
}

std::array<int, 3> per_axis(const json& v, int d, int dflt, const std::string& path, int min) {
  std::array<int, 3> out{1, 1, 1};
  if (v.is_null()) {
    for (int a = 0; a < d; ++a) out[a] = dflt;
    return out;
  }
  if (v.size() != 1 && static_cast<int>(v.size()) != d)
    fail(path, "expected 1 or " + std::to_string(d) + " entries");
  for (int a = 0; a < d; ++a) {
    out[a] = v[v.size() == 1 ? 0 : a].get<int>();
    if (out[a] < min) fail(path, "entries must be >= " + std::to_string(min));
  }
  return out;
}

expr::Expression parse_expr(const json& v, const std::string& path, const expr::ParseOptions& opt = {}) {
  try {
    return expr::Expression::parse(v.get<std::string>(), opt);
  } catch (const expr::ExprError& e) {
    fail(path, e.what());
  }
}

// Largest C with J(z) <= C exp(-|z|^(1+beta)) for the radial families.
double derived_decay_C(const KernelSpec& k, int d) {
  const double b = k.decay_beta;
  double best = 0.0;
  for (int i = 0; i <= 400000; ++i) {
    const double r = i * 1e-3;
    double logv;
    if (k.form == KernelForm::Gaussian)
      logv = -0.5 * d * std::log(2 * M_PI * k.sigma * k.sigma) - r * r / (2 * k.sigma * k.sigma);
    else  // theta sum is at least 1.772 on every axis
      logv = std::log(k.mu) - d * std::log(1.772) - r * r;
    best = std::max(best, logv + std::pow(r, 1 + b));
  }
  return std::exp(best) * (1 + 1e-9);
}

}  // namespace

json config_schema() {
  json s = schema_of(schema_tree());
  s["$schema"] = "https://json-schema.org/draft/2020-12/schema";
  s["title"] = "spechomog configuration";
  return s;
}

std::string config_hash(const json& filled) {
  const std::string text = filled.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig parse_config(json doc) {
  fill(schema_tree(), doc, "");
  RunConfig cfg;

  const json& m = doc["model"];
  const int d = m["dimension"].get<int>();
  DomainSpec box;
  box.d = d;
  for (const char* side : {"lower", "upper"}) {
    const json& v = m["domain"][side];
    if (v.is_null()) continue;
    const std::string path = std::string("model.domain.") + side;
    if (static_cast<int>(v.size()) != d) fail(path, "expected " + std::to_string(d) + " components");
    for (int a = 0; a < d; ++a) (side[0] == 'l' ? box.lower : box.upper)[a] = v[a].get<double>();
  }
  for (int a = 0; a < d; ++a)
    if (!(box.upper[a] > box.lower[a])) fail("model.domain", "upper must exceed lower on every axis");

  const json& k = m["kernel"];
  const std::string kind = k["type"];
  const double beta = k["decay_beta"];
  double C = k["decay_C"].is_null() ? 0.0 : k["decay_C"].get<double>();
  KernelSpec kernel;
  if (kind == "gaussian") {
    kernel = KernelSpec::gaussian(k["sigma"], 1.0, beta);
  } else if (kind == "lattice_gaussian") {
    kernel = KernelSpec::lattice_gaussian(k["mu"], 1.0, beta);
  } else {
    if (k["expression"].get<std::string>().empty()) fail("model.kernel.expression", "required for a custom kernel");
    if (C == 0.0) fail("model.kernel.decay_C", "required for a custom kernel");
    try {
      kernel = KernelSpec::custom_expr(k["expression"], C, beta);
    } catch (const expr::ExprError& e) {
      fail("model.kernel.expression", e.what());
    }
  }
  if (C == 0.0) {
    C = derived_decay_C(kernel, d);
    if (!(C < 1e6)) fail("model.kernel.decay_C", "cannot be derived for this width; set decay_C and decay_beta");
  }
  kernel.decay_C = C;
  cfg.model.kernel = kernel;
  cfg.model.domain = box;
  cfg.model.coefficients.kappa = parse_expr(m["kappa"], "model.kappa");
  cfg.model.coefficients.a = parse_expr(m["a"], "model.a");

  const json& g = doc["grids"];
  cfg.grids.torus_n = g["torus_n"];
  if (cfg.grids.torus_n & (cfg.grids.torus_n - 1)) fail("grids.torus_n", "must be a power of two");
  cfg.grids.hj_torus_n = g["hj_torus_n"];
  if (cfg.grids.hj_torus_n & (cfg.grids.hj_torus_n - 1)) fail("grids.hj_torus_n", "must be a power of two");
  cfg.grids.direct_q = g["direct_q"];
  cfg.grids.effective_N = per_axis(g["effective_N"], d, 127, "grids.effective_N", 3);
  cfg.grids.hj_x_counts = per_axis(g["hj_x_counts"], d, 33, "grids.hj_x_counts", 3);
  cfg.grids.hj_p_max = g["hj_p_max"];
  cfg.grids.hj_p_count = g["hj_p_count"];
  cfg.grids.dense_max = g["dense_max"];

  const json& t = doc["tolerances"];
  cfg.tol.eigen = t["eigen"];
  cfg.tol.truncation = t["truncation"];
  if (!t["classification"].is_null()) cfg.tol.classification = t["classification"].get<double>();
  cfg.tol.corrector = t["corrector"];
  cfg.tol.hj = t["hj"];
  cfg.tol.delta = t["delta"];
  cfg.tol.max_iter = t["max_iter"];

  const json& e = doc["experiment"];
  if (e["p_list"].is_null()) {
    for (double v : {-1.0, 0.0, 1.0}) {
      Point p{};
      p[0] = v;
      cfg.experiment.p_list.push_back(p);
    }
  } else {
    for (std::size_t i = 0; i < e["p_list"].size(); ++i)
      cfg.experiment.p_list.push_back(point_of(e["p_list"][i], d, "experiment.p_list[" + std::to_string(i) + "]"));
  }
  cfg.experiment.x = e["x"].is_null() ? box.center() : point_of(e["x"], d, "experiment.x");
  const auto eps = numbers(e["eps_list"]);
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const auto path = "experiment.eps_list[" + std::to_string(i) + "]";
    if (!(eps[i] > 0 && eps[i] <= 1)) fail(path, "eps must lie in (0, 1]");
    const double K = std::round(1.0 / eps[i]);
    if (std::abs(eps[i] * K - 1.0) > 1e-12) {
      std::ostringstream os;
      os.precision(17);
      os << "eps = " << eps[i] << " is not 1/K for an integer K; the direct grid requires eps = 1/K so that "
         << "x/eps lands on the periodic cell grid";
      fail(path, os.str());
    }
    cfg.experiment.eps_list.push_back(eps[i]);
    cfg.experiment.K_list.push_back(static_cast<int>(K));
  }
  cfg.experiment.k = e["k"];
  cfg.experiment.f = parse_expr(e["f"], "experiment.f", expr::ParseOptions{1u});

  cfg.output = doc["output"];
  json hashed = doc;
  hashed.erase("output");  // where results go does not change them
  cfg.hash = config_hash(hashed);
  cfg.document = std::move(doc);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return parse_config(std::move(doc));
}

cell::CellOptions cell_options(const RunConfig& cfg) {
  cell::CellOptions o;
  o.tol = cfg.tol.eigen;
  o.tol_trunc = cfg.tol.truncation;
  o.max_iter = cfg.tol.max_iter;
  o.tol_class = cfg.tol.classification.value_or(0.0);
  o.corrector_tol = cfg.tol.corrector;
  return o;
}

}  // namespace spechomog::cli
