#include "spechomog/model.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

namespace spechomog {

namespace {

constexpr int kLatticeReach = 6;  // |l|_inf <= 6 in lattice sums
constexpr int kDecayRadii = 64;
constexpr int kDecayDirections = 8;
constexpr double kDecayRadiusMax = 10.0;
constexpr int kCoefficientSamples = 1000;

// Sum over l in [-6, 6] of exp(-(t + l)^2) for t folded into [0, 1).
double theta_sum(double t) {
  const double f = fold_unit(t);
  double s = 0.0;
  for (int l = -kLatticeReach; l <= kLatticeReach; ++l) s += std::exp(-(f + l) * (f + l));
  return s;
}

std::string format_point(const Point& p, int d) {
  std::ostringstream os;
  os.precision(6);
  os << "(";
  for (int i = 0; i < d; ++i) os << (i ? ", " : "") << p[i];
  os << ")";
  return os.str();
}

void set_slots(expr::Slots& s, expr::Family f, const Point& v, int d) {
  for (int i = 0; i < d; ++i) s[expr::slot_of(f, i + 1)] = v[i];
}

std::vector<Point> decay_directions(int d) {
  std::vector<Point> dirs;
  if (d == 1) {
    for (int k = 0; k < kDecayDirections; ++k) dirs.push_back({k % 2 == 0 ? 1.0 : -1.0, 0, 0});
  } else if (d == 2) {
    for (int k = 0; k < kDecayDirections; ++k) {
      const double t = 2 * std::numbers::pi * k / kDecayDirections;
      dirs.push_back({std::cos(t), std::sin(t), 0});
    }
  } else {
    const double s = 1.0 / std::sqrt(3.0);
    for (int k = 0; k < kDecayDirections; ++k)
      dirs.push_back({(k & 1) ? -s : s, (k & 2) ? -s : s, (k & 4) ? -s : s});
  }
  return dirs;
}

}  // namespace

std::vector<double> halton_point(int index, int k) {
  static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  std::vector<double> out(k);
  for (int j = 0; j < k; ++j) {
    const int b = primes[j];
    double f = 1.0, r = 0.0;
    int i = index + 1;
    while (i > 0) {
      f /= b;
      r += f * (i % b);
      i /= b;
    }
    out[j] = r;
  }
  return out;
}

KernelSpec KernelSpec::gaussian(double sigma, double C, double beta) {
  KernelSpec k;
  k.form = KernelForm::Gaussian;
  k.sigma = sigma;
  k.decay_C = C;
  k.decay_beta = beta;
  return k;
}

KernelSpec KernelSpec::lattice_gaussian(double mu, double C, double beta) {
  KernelSpec k;
  k.form = KernelForm::LatticeGaussian;
  k.mu = mu;
  k.decay_C = C;
  k.decay_beta = beta;
  return k;
}

KernelSpec KernelSpec::custom_expr(const std::string& text, double C, double beta) {
  KernelSpec k;
  k.form = KernelForm::Custom;
  k.custom = expr::Expression::parse(text, expr::ParseOptions::kernel_offsets());
  k.decay_C = C;
  k.decay_beta = beta;
  return k;
}

double KernelSpec::value(const Point& z, int d) const {
  switch (form) {
    case KernelForm::Gaussian: {
      double r2 = 0.0;
      for (int i = 0; i < d; ++i) r2 += z[i] * z[i];
      const double norm = std::pow(2 * std::numbers::pi * sigma * sigma, -0.5 * d);
      return norm * std::exp(-r2 / (2 * sigma * sigma));
    }
    case KernelForm::LatticeGaussian: {
      double r2 = 0.0, denom = 1.0;
      for (int i = 0; i < d; ++i) {
        r2 += z[i] * z[i];
        denom *= theta_sum(z[i]);
      }
      return mu * std::exp(-r2) / denom;
    }
    case KernelForm::Custom: {
      expr::Slots s{};
      set_slots(s, expr::Family::Z, z, d);
      return custom.evaluate(s);
    }
  }
  return 0.0;
}

double DomainSpec::volume() const {
  double v = 1.0;
  for (int i = 0; i < d; ++i) v *= upper[i] - lower[i];
  return v;
}

Point DomainSpec::center() const {
  Point c{0, 0, 0};
  for (int i = 0; i < d; ++i) c[i] = 0.5 * (lower[i] + upper[i]);
  return c;
}

bool ValidationReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const ValidationCheck& c) { return c.passed; });
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    os << (c.passed ? "pass " : "FAIL ") << c.name;
    if (!c.worst_sample.empty()) os << " (worst " << c.worst_value << " at " << c.worst_sample << ")";
    if (!c.note.empty()) os << ": " << c.note;
    os << "\n";
  }
  for (const auto& n : notes) os << "note: " << n << "\n";
  return os.str();
}

ValidationReport validate_model(const ModelSpec& spec) {
  ValidationReport rep;
  const int d = spec.domain.d;
  auto add = [&rep](ValidationCheck c) {
    rep.checks.push_back(std::move(c));
    return rep.checks.back().passed;
  };

  {
    ValidationCheck c;
    c.name = "domain";
    if (d < 1 || d > expr::kMaxDim) {
      c.passed = false;
      c.note = "dimension must be 1, 2 or 3";
    } else {
      for (int i = 0; i < d; ++i) {
        if (!(spec.domain.upper[i] > spec.domain.lower[i])) {
          c.passed = false;
          c.note = "axis " + std::to_string(i + 1) + " has upper <= lower";
        }
      }
    }
    if (!add(c)) return rep;
  }

  {
    ValidationCheck c;
    c.name = "expression variables";
    const auto& co = spec.coefficients;
    if (co.kappa.uses_family(expr::Family::Z) || co.kappa.max_index() > d) {
      c.passed = false;
      c.note = "kappa may only use x1..xd, y1..yd, xi1..xid, eta1..etad";
    } else if (co.a.uses_family(expr::Family::Y) || co.a.uses_family(expr::Family::Eta) ||
               co.a.uses_family(expr::Family::Z) || co.a.max_index() > d) {
      c.passed = false;
      c.note = "a may only use x1..xd, xi1..xid";
    } else if (spec.kernel.form == KernelForm::Custom && spec.kernel.custom.max_index() > d) {
      c.passed = false;
      c.note = "custom kernel may only use z1..zd";
    }
    if (!add(c)) return rep;
  }

  const KernelSpec& k = spec.kernel;
  {
    ValidationCheck c;
    c.name = "kernel positive at origin";
    if (!(k.decay_C > 0) || !(k.decay_beta > 0)) {
      c.passed = false;
      c.note = "decay constants C and beta must be positive";
    } else {
      const double j0 = k.value(Point{0, 0, 0}, d);
      c.worst_value = j0;
      c.worst_sample = format_point(Point{0, 0, 0}, d);
      c.passed = j0 > 0;
      if (!c.passed) c.note = "J(0) must be > 0";
    }
    if (!add(c)) return rep;
  }

  {
    ValidationCheck c;
    c.name = "kernel decay bound";
    double worst = -std::numeric_limits<double>::infinity();
    Point worst_z{0, 0, 0};
    bool negative = false;
    for (const Point& dir : decay_directions(d)) {
      for (int r_i = 0; r_i < kDecayRadii; ++r_i) {
        const double r = kDecayRadiusMax * r_i / (kDecayRadii - 1);
        Point z{0, 0, 0};
        for (int i = 0; i < d; ++i) z[i] = r * dir[i];
        const double j = k.value(z, d);
        const double bound = k.decay_C * std::exp(-std::pow(r, 1 + k.decay_beta));
        const double ratio = j / bound;
        if (j < 0) negative = true;
        if (ratio > worst || j < 0) {
          worst = ratio;
          worst_z = z;
        }
      }
    }
    c.worst_value = worst;
    c.worst_sample = format_point(worst_z, d);
    c.passed = !negative && worst <= 1.0 + 1e-12;
    if (negative) {
      c.note = "J takes negative values";
    } else if (!c.passed) {
      c.note = "J(z) exceeds C exp(-|z|^(1+beta))";
    }
    if (!add(c)) return rep;
  }

  {
    ValidationCheck c;
    c.name = "kappa positivity";
    ValidationCheck ca;
    ca.name = "rate samples";
    double kmin = std::numeric_limits<double>::infinity(), kmax = -kmin;
    double amin = kmin, amax = -kmin;
    std::string kmin_at;
    for (int s = 0; s < kCoefficientSamples; ++s) {
      const auto h = halton_point(s, 4 * d);
      Point x{0, 0, 0}, y{0, 0, 0}, xi{0, 0, 0}, eta{0, 0, 0};
      for (int i = 0; i < d; ++i) {
        const double w = spec.domain.upper[i] - spec.domain.lower[i];
        x[i] = spec.domain.lower[i] + w * h[i];
        y[i] = spec.domain.lower[i] + w * h[d + i];
        xi[i] = h[2 * d + i];
        eta[i] = h[3 * d + i];
      }
      expr::Slots sl{};
      set_slots(sl, expr::Family::X, x, d);
      set_slots(sl, expr::Family::Y, y, d);
      set_slots(sl, expr::Family::Xi, xi, d);
      set_slots(sl, expr::Family::Eta, eta, d);
      double kv = 0.0, av = 0.0;
      try {
        kv = spec.coefficients.kappa.evaluate(sl);
        av = spec.coefficients.a.evaluate(sl);
      } catch (const expr::ExprError& e) {
        c.passed = false;
        c.note = e.what();
        c.worst_sample = "x=" + format_point(x, d) + " xi=" + format_point(xi, d);
        add(c);
        return rep;
      }
      if (kv < kmin) {
        kmin = kv;
        kmin_at = "x=" + format_point(x, d) + " y=" + format_point(y, d) + " xi=" + format_point(xi, d) +
                  " eta=" + format_point(eta, d);
      }
      kmax = std::max(kmax, kv);
      amin = std::min(amin, av);
      amax = std::max(amax, av);
    }
    c.worst_value = kmin;
    c.worst_sample = kmin_at;
    c.passed = kmin > 0 && std::isfinite(kmax);
    if (!c.passed) c.note = "kappa must be positive";
    rep.kappa_max = kmax;
    rep.a_min = amin;
    rep.a_max = amax;
    rep.sample_count = kCoefficientSamples;
    if (!add(c)) return rep;
    ca.worst_value = amin;
    ca.passed = std::isfinite(amin) && std::isfinite(amax);
    ca.note = "m, M over " + std::to_string(kCoefficientSamples) + " Halton samples";
    if (!add(ca)) return rep;
  }

  if (k.form == KernelForm::LatticeGaussian && d < 3)
    rep.notes.push_back("lattice-normalized Gaussian used with d = " + std::to_string(d) +
                        " (the separable construction is stated for d >= 3)");
  return rep;
}

Model Model::validated(ModelSpec spec) {
  Model m;
  m.report_ = validate_model(spec);
  if (!m.report_.ok()) {
    for (const auto& c : m.report_.checks) {
      if (!c.passed) {
        std::string msg = "model validation failed: " + c.name;
        if (!c.note.empty()) msg += ": " + c.note;
        if (!c.worst_sample.empty()) msg += " at " + c.worst_sample;
        throw ValidationError(msg);
      }
    }
  }
  m.spec_ = std::move(spec);
  return m;
}

Model Model::with_coefficients(CoefficientSpec c) const {
  ModelSpec s = spec_;
  s.coefficients = std::move(c);
  return validated(std::move(s));
}

bool Model::kappa_depends_on_slow() const {
  const auto& k = spec_.coefficients.kappa;
  return k.uses_family(expr::Family::X) || k.uses_family(expr::Family::Y);
}

bool Model::a_depends_on_slow() const { return spec_.coefficients.a.uses_family(expr::Family::X); }

double Model::kappa(const Point& x, const Point& y, const Point& xi, const Point& eta) const {
  const auto& e = spec_.coefficients.kappa;
  if (e.is_constant()) return e.evaluate(expr::Slots{});
  const int d = dim();
  expr::Slots s{};
  for (int i = 0; i < d; ++i) {
    s[expr::slot_of(expr::Family::X, i + 1)] = x[i];
    s[expr::slot_of(expr::Family::Y, i + 1)] = y[i];
    s[expr::slot_of(expr::Family::Xi, i + 1)] = fold_unit(xi[i]);
    s[expr::slot_of(expr::Family::Eta, i + 1)] = fold_unit(eta[i]);
  }
  return e.evaluate(s);
}

double Model::raw_a(const Point& x, const Point& xi) const {
  const int d = dim();
  expr::Slots s{};
  for (int i = 0; i < d; ++i) {
    s[expr::slot_of(expr::Family::X, i + 1)] = x[i];
    s[expr::slot_of(expr::Family::Xi, i + 1)] = fold_unit(xi[i]);
  }
  return spec_.coefficients.a.evaluate(s);
}

double Model::hat_a(const Point& x) const {
  // Single-entry cache: callers sweep xi at a fixed x.
  thread_local const Model* cached_model = nullptr;
  thread_local Point cached_x{};
  thread_local double cached_value = 0.0;
  if (cached_model == this && cached_x == x) return cached_value;

  const int d = dim();
  const int n = spec_.coefficients.regularization->torus_n;
  long total = 1;
  for (int i = 0; i < d; ++i) total *= n;
  double best = std::numeric_limits<double>::infinity();
  for (long idx = 0; idx < total; ++idx) {
    Point xi{0, 0, 0};
    long r = idx;
    for (int i = 0; i < d; ++i) {
      xi[i] = static_cast<double>(r % n) / n;
      r /= n;
    }
    best = std::min(best, raw_a(x, xi));
  }
  cached_model = this;
  cached_x = x;
  cached_value = best;
  return best;
}

double Model::a(const Point& x, const Point& xi) const {
  const double raw = raw_a(x, xi);
  const auto& reg = spec_.coefficients.regularization;
  if (!reg) return raw;
  const double hat_delta = std::max(hat_a(x), reg->hat_min + 0.5 * reg->delta);
  return std::max(raw, hat_delta + 0.5 * reg->delta);
}

double tilted_kernel_value(const Model& m, const Point& p, const Point& x, const Point& xi, const Point& z) {
  const int d = m.dim();
  double pz = 0.0;
  Point eta{0, 0, 0};
  for (int i = 0; i < d; ++i) {
    pz += p[i] * z[i];
    eta[i] = xi[i] - z[i];
  }
  return m.J(z) * std::exp(pz) * m.kappa(x, x, xi, eta);
}

double truncation_radius(const KernelSpec& k, int d, double p_norm, double kappa_max, double tol) {
  if (!(tol > 0)) throw std::invalid_argument("truncation tolerance must be positive");
  constexpr double kCap = 1000.0;
  auto tail = [&](double R) {
    const double logv = std::log(k.decay_C * kappa_max) + d * std::log1p(R) - std::pow(R, 1 + k.decay_beta) +
                        p_norm * R;
    return logv;
  };
  const double log_tol = std::log(tol);
  if (tail(kCap) > log_tol) throw NumericalError("tilt too large for decay: no truncation radius <= 1000");

  double hi = 1.0;
  while (tail(hi) > log_tol) hi = std::min(2 * hi, kCap);
  double lo = hi > 1.0 ? 0.5 * hi : 0.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (tail(mid) > log_tol) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 1.5 * hi;
}

CoefficientSpec regularize_a(const Model& m, double delta, const std::vector<Point>& x_samples, int torus_n) {
  if (!(delta > 0)) throw std::invalid_argument("regularization delta must be positive");
  CoefficientSpec base = m.spec().coefficients;
  base.regularization.reset();
  const Model plain = m.spec().coefficients.regularization ? m.with_coefficients(base) : m;

  const int d = m.dim();
  long total = 1;
  for (int i = 0; i < d; ++i) total *= torus_n;
  // The minimum over the closed domain: the given samples plus a closed
  // 17^d grid, so minima on the boundary are not missed.
  std::vector<Point> xs = x_samples;
  const auto& box = m.domain();
  const int nb = 17;
  long nbox = 1;
  for (int i = 0; i < d; ++i) nbox *= nb;
  for (long idx = 0; idx < nbox; ++idx) {
    Point x{0, 0, 0};
    long r = idx;
    for (int i = 0; i < d; ++i) {
      x[i] = box.lower[i] + (box.upper[i] - box.lower[i]) * static_cast<double>(r % nb) / (nb - 1);
      r /= nb;
    }
    xs.push_back(x);
  }
  double hat_min = std::numeric_limits<double>::infinity();
  for (const Point& x : xs) {
    for (long idx = 0; idx < total; ++idx) {
      Point xi{0, 0, 0};
      long r = idx;
      for (int i = 0; i < d; ++i) {
        xi[i] = static_cast<double>(r % torus_n) / torus_n;
        r /= torus_n;
      }
      hat_min = std::min(hat_min, plain.a(x, xi));
    }
  }
  CoefficientSpec out = base;
  out.regularization = Regularization{delta, hat_min, torus_n};
  return out;
}

}  // namespace spechomog
