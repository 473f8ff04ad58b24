#include "pcfs/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <fmt/format.h>

#include "pcfs/errors.hpp"
#include "pcfs/spectra.hpp"
#include "pcfs/units.hpp"

namespace pcfs {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kTimeLo = 1e-3;  // ns
constexpr double kTimeHi = 1e9;   // ns
constexpr double kNudge = 0.999;  // keeps sine-mapped starts off the flat ends

// --- change of variables ---------------------------------------------------------------

struct Transform {
    enum class Kind { Free, Both, Lower, Upper };
    Kind kind = Kind::Free;
    bool log = false;
    double lo = -kInf, hi = kInf;  // in s = log ? ln x : x

    explicit Transform(const ParamSpec& p) : log(p.log_scale) {
        lo = log ? (p.lower > 0.0 ? std::log(p.lower) : -kInf) : p.lower;
        hi = log ? (std::isfinite(p.upper) ? std::log(p.upper) : kInf) : p.upper;
        const bool has_lo = std::isfinite(lo), has_hi = std::isfinite(hi);
        kind = has_lo && has_hi ? Kind::Both : has_lo ? Kind::Lower : has_hi ? Kind::Upper : Kind::Free;
    }

    double s_of(double u) const {
        switch (kind) {
            case Kind::Both: return lo + 0.5 * (hi - lo) * (1.0 + std::sin(u));
            case Kind::Lower: return lo - 1.0 + std::sqrt(u * u + 1.0);
            case Kind::Upper: return hi + 1.0 - std::sqrt(u * u + 1.0);
            case Kind::Free: break;
        }
        return u;
    }
    double ds_du(double u) const {
        switch (kind) {
            case Kind::Both: return 0.5 * (hi - lo) * std::cos(u);
            case Kind::Lower: return u / std::sqrt(u * u + 1.0);
            case Kind::Upper: return -u / std::sqrt(u * u + 1.0);
            case Kind::Free: break;
        }
        return 1.0;
    }
    double external(double u) const { return log ? std::exp(s_of(u)) : s_of(u); }
    double dx_du(double u) const { return (log ? std::exp(s_of(u)) : 1.0) * ds_du(u); }

    double internal(double x) const {
        const double s = log ? std::log(x) : x;
        switch (kind) {
            case Kind::Both: {
                const double t = std::clamp(2.0 * (s - lo) / (hi - lo) - 1.0, -kNudge, kNudge);
                return std::asin(t);
            }
            case Kind::Lower: {
                const double d = std::max(s - lo, 1e-3) + 1.0;
                return std::sqrt(d * d - 1.0);
            }
            case Kind::Upper: {
                const double d = std::max(hi - s, 1e-3) + 1.0;
                return std::sqrt(d * d - 1.0);
            }
            case Kind::Free: break;
        }
        return s;
    }
    bool at_bound(double u) const {
        switch (kind) {
            case Kind::Both: return std::abs(std::cos(u)) < 1e-3;
            case Kind::Lower:
            case Kind::Upper: return std::abs(u) < 1e-3;
            case Kind::Free: break;
        }
        return false;
    }
};

// --- built-in models ----------------------------------------------------------------------

// ⟨e^(−τ/τsd)⟩ over [lo, hi] (or at x when the bin is empty) and its τsd derivative
std::pair<double, double> mean_decay(double x, double lo, double hi, double tau_sd) {
    if (!(hi > lo)) {
        const double e = std::exp(-x / tau_sd);
        return {e, e * x / (tau_sd * tau_sd)};
    }
    // e^(−lo/τ)·g(w/τ), g(z) = (1 − e^(−z))/z
    const double w = hi - lo, z = w / tau_sd, e = std::exp(-lo / tau_sd);
    double g, dg;
    if (z < 1e-4) {
        g = 1.0 - z / 2.0 + z * z / 6.0;
        dg = -0.5 + z / 3.0 - z * z / 8.0;
    } else {
        g = -std::expm1(-z) / z;
        dg = (z * std::exp(-z) + std::expm1(-z)) / (z * z);
    }
    const double value = e * g;
    const double d = e * (lo / (tau_sd * tau_sd)) * g + e * dg * (-w / (tau_sd * tau_sd));
    return {value, d};
}

std::pair<double, double> point_bin(const Dataset& d, std::size_t i) {
    if (d.x_lo.empty()) return {kNaN, kNaN};
    return {d.x_lo[i], d.x_hi[i]};
}

double model_value(FitModel m, double x, std::span<const double> s, std::span<const double> l, const Dataset& d,
                   std::size_t i, std::span<double> g) {
    const bool want = !g.empty();
    switch (m) {
        case FitModel::FtsVoigt: {
            const double t2 = s[0], ts = s[1];
            const double v = std::exp(-x / t2 - (x / ts) * (x / ts));
            if (want) {
                g[0] = v * x / (t2 * t2);
                g[1] = v * 2.0 * x * x / (ts * ts * ts);
            }
            return v;
        }
        case FitModel::FtsExp: {
            const double v = std::exp(-x / s[0]);
            if (want) g[0] = v * x / (s[0] * s[0]);
            return v;
        }
        case FitModel::FtsGauss: {
            const double v = std::exp(-(x / s[0]) * (x / s[0]));
            if (want) g[0] = v * 2.0 * x * x / (s[0] * s[0] * s[0]);
            return v;
        }
        case FitModel::PcfsVoigt: {
            const double t2 = s[0], ts = l[0];
            const double c = std::exp(-2.0 * x / t2 - 2.0 * x * x / (ts * ts));
            if (want) {
                g[0] = c * 2.0 * x / (t2 * t2);
                g[1] = c * 4.0 * x * x / (ts * ts * ts);
            }
            return c;
        }
        case FitModel::PcfsGrj: {
            const double t2 = s[0], ts = s[1], a = l[0];
            const double e = std::exp(-2.0 * x / t2), gs = std::exp(-2.0 * x * x / (ts * ts));
            const double c = e * (a + (1.0 - a) * gs);
            if (want) {
                g[0] = c * 2.0 * x / (t2 * t2);
                g[1] = e * (1.0 - a) * gs * 4.0 * x * x / (ts * ts * ts);
                g[2] = e * (1.0 - gs);
            }
            return c;
        }
        case FitModel::ExpDecay: {
            const auto [lo, hi] = point_bin(d, i);
            const auto [v, dv] = mean_decay(x, lo, hi, s[0]);
            if (want) g[0] = dv;
            return v;
        }
        case FitModel::OuInhomLinewidth:
        case FitModel::OuTotalLinewidth: {
            const double dw = s[0], tsd = s[1];
            const auto [lo, hi] = point_bin(d, i);
            const auto [a, da] = mean_decay(x, lo, hi, tsd);
            const double q = std::max(1.0 - a, 1e-300), root = std::sqrt(q);
            const double inhom = dw * root;
            const double d_dw = root, d_tsd = -dw * da / (2.0 * root);
            if (m == FitModel::OuInhomLinewidth) {
                if (want) {
                    g[0] = d_dw;
                    g[1] = d_tsd;
                }
                return inhom;
            }
            const double f_l = 2.0 / s[2], sig = inhom / kGaussFwhmPerSigma;
            const double total = voigt_fwhm(f_l, sig);
            if (want) {
                // the FWHM root find is accurate to ~1e−13, so central differences suffice
                const double hs = 1e-5 * std::max(sig, 1e-6 * f_l);
                const double d_sig = (voigt_fwhm(f_l, sig + hs) - voigt_fwhm(f_l, std::max(sig - hs, 0.0))) /
                                     (sig + hs - std::max(sig - hs, 0.0));
                const double hl = 1e-5 * f_l;
                const double d_fl = (voigt_fwhm(f_l + hl, sig) - voigt_fwhm(f_l - hl, sig)) / (2.0 * hl);
                g[0] = d_sig * d_dw / kGaussFwhmPerSigma;
                g[1] = d_sig * d_tsd / kGaussFwhmPerSigma;
                g[2] = d_fl * (-2.0 / (s[2] * s[2]));
            }
            return total;
        }
        case FitModel::Custom: break;
    }
    throw DomainError("evaluate_model: no built-in model");
}

std::pair<std::size_t, std::size_t> layout(FitModel m) {
    switch (m) {
        case FitModel::FtsVoigt: return {2, 0};
        case FitModel::FtsExp:
        case FitModel::FtsGauss: return {1, 0};
        case FitModel::PcfsVoigt: return {1, 1};
        case FitModel::PcfsGrj: return {2, 1};
        case FitModel::OuTotalLinewidth: return {3, 0};
        case FitModel::OuInhomLinewidth: return {2, 0};
        case FitModel::ExpDecay: return {1, 0};
        case FitModel::Custom: break;
    }
    return {0, 0};
}

// --- evaluation of the whole problem -----------------------------------------------------

class Evaluator {
  public:
    explicit Evaluator(const FitProblem& p) : p_(p) {
        ns_ = p.shared.size();
        nl_ = p.per_dataset.size();
        nd_ = p.datasets.size();
        for (const auto& d : p.datasets) n_points_ += d.size();
        specs_.reserve(ns_ + nd_ * nl_);
        for (const auto& s : p.shared) specs_.push_back(s);
        for (std::size_t d = 0; d < nd_; ++d)
            for (std::size_t k = 0; k < nl_; ++k) {
                ParamSpec s = p.per_dataset[k];
                if (!p.per_dataset_initial.empty()) s.initial = p.per_dataset_initial[d][k];
                specs_.push_back(s);
            }
        for (std::size_t j = 0; j < specs_.size(); ++j) {
            transforms_.emplace_back(specs_[j]);
            if (!specs_[j].fixed) free_.push_back(j);
        }
    }

    std::size_t n_points() const { return n_points_; }
    std::size_t n_free() const { return free_.size(); }
    const std::vector<std::size_t>& free() const { return free_; }
    const std::vector<ParamSpec>& specs() const { return specs_; }
    const Transform& transform(std::size_t j) const { return transforms_[j]; }

    Eigen::VectorXd initial_internal() const {
        Eigen::VectorXd u(free_.size());
        for (std::size_t f = 0; f < free_.size(); ++f)
            u[static_cast<Eigen::Index>(f)] = transforms_[free_[f]].internal(specs_[free_[f]].initial);
        return u;
    }

    std::vector<double> external(const Eigen::VectorXd& u) const {
        std::vector<double> x(specs_.size());
        for (std::size_t j = 0; j < specs_.size(); ++j) x[j] = specs_[j].initial;
        for (std::size_t f = 0; f < free_.size(); ++f)
            x[free_[f]] = transforms_[free_[f]].external(u[static_cast<Eigen::Index>(f)]);
        return x;
    }

    /// Weighted residuals (y − m)/σ and, optionally, ∂r/∂x over free external parameters.
    void residuals(const std::vector<double>& x, Eigen::VectorXd& r, Eigen::MatrixXd* jac) const {
        r.resize(static_cast<Eigen::Index>(n_points_));
        if (jac) jac->setZero(static_cast<Eigen::Index>(n_points_), static_cast<Eigen::Index>(free_.size()));
        // map from full parameter index to free column
        std::vector<int> col(specs_.size(), -1);
        for (std::size_t f = 0; f < free_.size(); ++f) col[free_[f]] = static_cast<int>(f);

        std::vector<double> grad(ns_ + nl_);
        Eigen::Index row = 0;
        for (std::size_t d = 0; d < nd_; ++d) {
            const auto& ds = p_.datasets[d];
            const std::span<const double> shared(x.data(), ns_);
            const std::span<const double> local(x.data() + ns_ + d * nl_, nl_);
            for (std::size_t i = 0; i < ds.size(); ++i, ++row) {
                const double s = std::max(ds.sigma[i], p_.sigma_floor);
                const double m = value(ds.x[i], shared, local, ds, i, jac ? std::span<double>(grad) : std::span<double>{});
                r[row] = (ds.y[i] - m) / s;
                if (!jac) continue;
                for (std::size_t k = 0; k < ns_ + nl_; ++k) {
                    const std::size_t j = k < ns_ ? k : ns_ + d * nl_ + (k - ns_);
                    if (col[j] >= 0) (*jac)(row, col[j]) = -grad[k] / s;
                }
            }
        }
    }

  private:
    double value(double x, std::span<const double> shared, std::span<const double> local, const Dataset& d,
                 std::size_t i, std::span<double> grad) const {
        if (p_.model != FitModel::Custom) return model_value(p_.model, x, shared, local, d, i, grad);
        if (grad.empty() || p_.custom_gradient) return p_.custom(x, shared, local, d, i, grad);
        // central differences in external parameters
        const double v = p_.custom(x, shared, local, d, i, {});
        std::vector<double> sh(shared.begin(), shared.end()), lo(local.begin(), local.end());
        auto diff = [&](double& slot) {
            const double keep = slot, h = 1e-6 * std::max(std::abs(keep), 1e-8);
            slot = keep + h;
            const double up = p_.custom(x, sh, lo, d, i, {});
            slot = keep - h;
            const double dn = p_.custom(x, sh, lo, d, i, {});
            slot = keep;
            return (up - dn) / (2.0 * h);
        };
        for (std::size_t k = 0; k < sh.size(); ++k) grad[k] = diff(sh[k]);
        for (std::size_t k = 0; k < lo.size(); ++k) grad[sh.size() + k] = diff(lo[k]);
        return v;
    }

    const FitProblem& p_;
    std::size_t ns_ = 0, nl_ = 0, nd_ = 0, n_points_ = 0;
    std::vector<ParamSpec> specs_;
    std::vector<Transform> transforms_;
    std::vector<std::size_t> free_;
};

// Scaled normal matrix N = S·JᵀJ·S with S = diag(1/sqrt(diag)); returns the
// reciprocal condition estimate and the free columns that touch the null space.
struct NormalAnalysis {
    Eigen::MatrixXd covariance;
    std::vector<std::size_t> degenerate;
    double rcond = 0.0;
};

NormalAnalysis analyse_normal(const Eigen::MatrixXd& jac) {
    const Eigen::Index n = jac.cols();
    NormalAnalysis out;
    out.covariance = Eigen::MatrixXd::Constant(n, n, kNaN);
    const Eigen::MatrixXd a = jac.transpose() * jac;
    Eigen::VectorXd scale(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        if (!(a(j, j) > 0.0) || !std::isfinite(a(j, j))) {
            out.degenerate.push_back(static_cast<std::size_t>(j));
            scale[j] = 0.0;
        } else {
            scale[j] = 1.0 / std::sqrt(a(j, j));
        }
    }
    if (!out.degenerate.empty()) return out;
    const Eigen::MatrixXd nrm = scale.asDiagonal() * a * scale.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(nrm);
    const auto& ev = es.eigenvalues();
    out.rcond = ev.minCoeff() / ev.maxCoeff();
    constexpr double kTol = 1e-14;
    Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto v = es.eigenvectors().col(k);
        if (ev[k] > kTol * ev.maxCoeff()) {
            inv += v * v.transpose() / ev[k];
        } else {
            for (Eigen::Index j = 0; j < n; ++j)
                if (std::abs(v[j]) > 1e-3) out.degenerate.push_back(static_cast<std::size_t>(j));
        }
    }
    std::sort(out.degenerate.begin(), out.degenerate.end());
    out.degenerate.erase(std::unique(out.degenerate.begin(), out.degenerate.end()), out.degenerate.end());
    out.covariance = scale.asDiagonal() * inv * scale.asDiagonal();
    for (auto j : out.degenerate) {
        out.covariance.row(static_cast<Eigen::Index>(j)).setConstant(kInf);
        out.covariance.col(static_cast<Eigen::Index>(j)).setConstant(kInf);
    }
    return out;
}

// --- helpers for the specialised fits ---------------------------------------------------------

// Weighted fit of ln y = −b1·x − b2·x² through the points with y clearly
// above zero; either coefficient can be held at zero.
struct LogQuad {
    double b1 = kNaN, b2 = kNaN;
};

LogQuad log_quadratic(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& s,
                      bool use_b1, bool use_b2, double known_b1 = 0.0) {
    double s11 = 0, s12 = 0, s22 = 0, t1 = 0, t2 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(y[i] > std::max(3.0 * s[i], 0.02)) || x[i] <= 0.0) continue;
        const double w = (y[i] / s[i]) * (y[i] / s[i]);
        const double z = -std::log(y[i]) - (use_b1 ? 0.0 : known_b1 * x[i]);
        const double x2 = x[i] * x[i];
        s11 += w * x2;
        s12 += w * x2 * x[i];
        s22 += w * x2 * x2;
        t1 += w * x[i] * z;
        t2 += w * x2 * z;
    }
    LogQuad q;
    if (use_b1 && use_b2) {
        const double det = s11 * s22 - s12 * s12;
        if (det > 0.0) {
            q.b1 = (t1 * s22 - t2 * s12) / det;
            q.b2 = (s11 * t2 - s12 * t1) / det;
        }
    } else if (use_b1) {
        if (s11 > 0.0) q.b1 = t1 / s11;
    } else if (s22 > 0.0) {
        q.b2 = t2 / s22;
    }
    return q;
}

// Time constant from a positive rate coefficient, clamped into the fit bounds.
double time_from_rate(double b, double factor, double power, double fallback) {
    if (!(b > 0.0) || !std::isfinite(b)) return fallback;
    return std::clamp(factor / std::pow(b, power), 2.0 * kTimeLo, 0.5 * kTimeHi);
}

ParamSpec time_param(const char* name, double initial) {
    return {name, std::clamp(initial, 2.0 * kTimeLo, 0.5 * kTimeHi), kTimeLo, kTimeHi, true, false};
}

void note_poorly_constrained(FitResult& r) {
    auto check = [&](const ParamEstimate& p, const std::string& where) {
        if (p.fixed) return;
        if (p.at_bound) r.notices.push_back(fmt::format("{}{} at its bound ({:.6g})", p.name, where, p.value));
        else if (!(p.sigma <= 0.5 * std::abs(p.value)))
            r.notices.push_back(fmt::format("{}{} poorly constrained: {:.6g} ± {:.3g}", p.name, where, p.value, p.sigma));
    };
    for (const auto& p : r.shared) check(p, "");
}

struct SliceData {
    std::vector<Dataset> datasets;
    std::vector<std::string> notices;
};

SliceData slices_from_surface(const PCFSSurface& s, const SurfaceFitOptions& o) {
    if (s.n_deltas() == 0 || s.n_taus() == 0) throw DomainError("surface fit: empty surface");
    SliceData out;
    for (std::size_t k = 0; k < s.n_taus(); ++k) {
        const double tau = s.taus[k];
        if (tau < o.tau_min_s || tau > o.tau_max_s) continue;
        Dataset d;
        d.tau_s = tau;
        if (s.tau_edges.size() == s.n_taus() + 1) {
            d.tau_lo = s.tau_edges[k];
            d.tau_hi = s.tau_edges[k + 1];
        }
        for (std::size_t i = 0; i < s.n_deltas(); ++i) {
            if (s.flagged[i][k]) continue;
            const double c = s.contrast[i][k], e = s.sigma[i][k];
            if (!std::isfinite(c) || !(e > 0.0) || !std::isfinite(e)) continue;
            d.x.push_back(s.deltas[i]);
            d.y.push_back(c);
            d.sigma.push_back(e);
        }
        if (d.size() == 0) {
            out.notices.push_back(fmt::format("slice tau = {:.4g} s skipped: all bins flagged", tau));
            continue;
        }
        if (d.size() < o.min_points) {
            out.notices.push_back(
                fmt::format("slice tau = {:.4g} s skipped: {} valid delays < {}", tau, d.size(), o.min_points));
            continue;
        }
        out.datasets.push_back(std::move(d));
    }
    if (out.datasets.empty()) throw DomainError("surface fit: no usable tau slice");
    return out;
}

std::vector<double> floored(const std::vector<double>& s, double floor) {
    std::vector<double> out(s);
    for (auto& v : out) v = std::max(v, floor);
    return out;
}

// τ of the steepest change of y versus ln τ between consecutive points
std::optional<double> steepest(const std::vector<double>& tau, const std::vector<double>& y, double sign) {
    std::optional<double> best_tau;
    double best = -kInf;
    for (std::size_t j = 0; j + 1 < tau.size(); ++j) {
        const double slope = sign * (y[j + 1] - y[j]) / std::log(tau[j + 1] / tau[j]);
        if (slope > best) {
            best = slope;
            best_tau = std::sqrt(tau[j] * tau[j + 1]);
        }
    }
    return best_tau;
}

}  // namespace

const char* to_string(FitModel m) {
    switch (m) {
        case FitModel::FtsVoigt: return "fts-voigt";
        case FitModel::FtsExp: return "fts-exp";
        case FitModel::FtsGauss: return "fts-gauss";
        case FitModel::PcfsVoigt: return "pcfs-voigt-global";
        case FitModel::PcfsGrj: return "pcfs-grj-global";
        case FitModel::OuTotalLinewidth: return "ou-linewidth-total";
        case FitModel::OuInhomLinewidth: return "ou-linewidth-inhom";
        case FitModel::ExpDecay: return "exp-decay";
        case FitModel::Custom: return "custom";
    }
    return "?";
}

double evaluate_model(FitModel model, double x, std::span<const double> shared, std::span<const double> local,
                      const Dataset& d, std::size_t point, std::span<double> grad) {
    const auto [ns, nl] = layout(model);
    if (model == FitModel::Custom || shared.size() != ns || local.size() != nl)
        throw DomainError("evaluate_model: parameter count does not match the model");
    if (!grad.empty() && grad.size() != ns + nl) throw DomainError("evaluate_model: gradient size mismatch");
    return model_value(model, x, shared, local, d, point, grad);
}

void FitProblem::validate() const {
    if (datasets.empty()) throw DomainError("FitProblem: no datasets");
    if (model == FitModel::Custom) {
        if (!custom) throw DomainError("FitProblem: custom model without a function");
    } else {
        const auto [ns, nl] = layout(model);
        if (shared.size() != ns || per_dataset.size() != nl)
            throw DomainError(fmt::format("FitProblem: {} expects {} shared and {} per-dataset parameters",
                                          to_string(model), ns, nl));
    }
    std::vector<std::string> names;
    auto check_spec = [&](const ParamSpec& p, double initial) {
        if (!(p.lower <= p.upper)) throw DomainError("FitProblem: bad bounds for " + p.name);
        if (!std::isfinite(initial) || initial < p.lower || initial > p.upper)
            throw DomainError(fmt::format("FitProblem: initial {} of {} outside its bounds", initial, p.name));
        if (p.log_scale && (!(initial > 0.0) || p.lower < 0.0))
            throw DomainError("FitProblem: log-scale parameter " + p.name + " must be positive");
    };
    for (const auto& p : shared) {
        check_spec(p, p.initial);
        names.push_back(p.name);
    }
    for (std::size_t k = 0; k < per_dataset.size(); ++k) {
        names.push_back(per_dataset[k].name);
        if (per_dataset_initial.empty()) check_spec(per_dataset[k], per_dataset[k].initial);
    }
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end())
        throw DomainError("FitProblem: a parameter is both shared and per-dataset, or named twice");
    if (!per_dataset_initial.empty()) {
        if (per_dataset_initial.size() != datasets.size()) throw DomainError("FitProblem: per_dataset_initial size");
        for (const auto& row : per_dataset_initial) {
            if (row.size() != per_dataset.size()) throw DomainError("FitProblem: per_dataset_initial row size");
            for (std::size_t k = 0; k < row.size(); ++k) check_spec(per_dataset[k], row[k]);
        }
    }
    if (!(sigma_floor >= 0.0)) throw DomainError("FitProblem: sigma floor must be >= 0");
    const auto free_local = static_cast<std::size_t>(
        std::count_if(per_dataset.begin(), per_dataset.end(), [](const ParamSpec& p) { return !p.fixed; }));
    const auto free_shared = static_cast<std::size_t>(
        std::count_if(shared.begin(), shared.end(), [](const ParamSpec& p) { return !p.fixed; }));
    std::size_t n = 0;
    for (const auto& d : datasets) {
        if (d.y.size() != d.size() || d.sigma.size() != d.size())
            throw DomainError("FitProblem: x, y and sigma lengths differ");
        if (!d.x_lo.empty() && (d.x_lo.size() != d.size() || d.x_hi.size() != d.size()))
            throw DomainError("FitProblem: bin edge lengths differ");
        if (d.size() < free_local + 2)
            throw DomainError("FitProblem: need at least 2 points per dataset beyond its own parameters");
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (!all_finite({d.x[i], d.y[i], d.sigma[i]})) throw DomainError("FitProblem: non-finite data");
            if (!(std::max(d.sigma[i], sigma_floor) > 0.0)) throw DomainError("FitProblem: sigma must be > 0");
        }
        n += d.size();
    }
    const std::size_t k = free_shared + free_local * datasets.size();
    if (n <= k) throw DomainError("FitProblem: no degrees of freedom left");
}

const ParamEstimate& FitResult::param(std::string_view name) const {
    for (const auto& p : shared)
        if (p.name == name) return p;
    throw DomainError(fmt::format("FitResult: no shared parameter '{}'", name));
}

std::vector<double> FitResult::column(std::string_view name) const {
    std::vector<double> out;
    for (const auto& row : per_dataset)
        for (const auto& p : row)
            if (p.name == name) out.push_back(p.value);
    return out;
}

std::vector<double> FitResult::column_sigma(std::string_view name) const {
    std::vector<double> out;
    for (const auto& row : per_dataset)
        for (const auto& p : row)
            if (p.name == name) out.push_back(p.sigma);
    return out;
}

FitResult fit_least_squares(const FitProblem& problem) {
    problem.validate();
    const Evaluator ev(problem);
    const auto nf = static_cast<Eigen::Index>(ev.n_free());

    Eigen::VectorXd u = ev.initial_internal();
    Eigen::VectorXd r, r_new;
    Eigen::MatrixXd jx;

    auto chain = [&](const Eigen::VectorXd& uu, const Eigen::MatrixXd& jext) {
        Eigen::MatrixXd j = jext;
        for (Eigen::Index f = 0; f < nf; ++f) j.col(f) *= ev.transform(ev.free()[static_cast<std::size_t>(f)]).dx_du(uu[f]);
        return j;
    };

    ev.residuals(ev.external(u), r, &jx);
    if (!r.allFinite()) throw DegenerateModelError("fit: model is not finite at the initial parameters");
    {
        const auto na = analyse_normal(jx);
        if (!na.degenerate.empty()) {
            std::string names;
            for (auto f : na.degenerate) names += " " + ev.specs()[ev.free()[f]].name;
            throw DegenerateModelError("fit: singular Jacobian at the start; unidentifiable:" + names);
        }
    }

    FitResult out;
    out.model = to_string(problem.model);
    double chi2 = r.squaredNorm();
    Eigen::MatrixXd j = chain(u, jx);
    Eigen::VectorXd diag_scale = (j.transpose() * j).diagonal();
    double lambda = 1e-3, nu = 2.0;
    bool converged = false;
    int it = 0;

    for (; it < problem.max_iterations && !converged; ++it) {
        const Eigen::MatrixXd a = j.transpose() * j;
        const Eigen::VectorXd g = j.transpose() * r;
        diag_scale = diag_scale.cwiseMax(a.diagonal());
        const double dmax = diag_scale.maxCoeff();
        const Eigen::VectorXd dscale = diag_scale.cwiseMax(1e-12 * (dmax > 0.0 ? dmax : 1.0));

        bool stepped = false;
        while (!stepped) {
            Eigen::MatrixXd m = a;
            m.diagonal() += lambda * dscale;
            const Eigen::VectorXd h = m.ldlt().solve(-g);
            const double step = h.norm();
            if (!h.allFinite() || step < 1e-12 * (u.norm() + 1e-12)) {
                converged = true;
                break;
            }
            const Eigen::VectorXd u_new = u + h;
            ev.residuals(ev.external(u_new), r_new, nullptr);
            const double chi2_new = r_new.allFinite() ? r_new.squaredNorm() : kInf;
            if (chi2_new < chi2) {
                const double rel = (chi2 - chi2_new) / std::max(chi2_new, 1e-300);
                // gain ratio of actual vs predicted decrease steers the damping
                const double predicted = -(2.0 * g.dot(h) + h.dot(a * h));
                const double rho = predicted > 0.0 ? (chi2 - chi2_new) / predicted : 0.0;
                lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
                lambda = std::max(lambda, 1e-15);
                nu = 2.0;
                u = u_new;
                chi2 = chi2_new;
                ev.residuals(ev.external(u), r, &jx);
                j = chain(u, jx);
                stepped = true;
                if (rel < 1e-10) {
                    // stop unless a lightly damped step still promises progress;
                    // the damping keeps parameters pinned at a bound from
                    // producing unbounded Gauss–Newton steps
                    Eigen::MatrixXd a2 = j.transpose() * j;
                    const Eigen::VectorXd g2 = j.transpose() * r;
                    diag_scale = diag_scale.cwiseMax(a2.diagonal());
                    a2.diagonal() += 1e-6 * diag_scale.cwiseMax(1e-12 * diag_scale.maxCoeff());
                    const Eigen::VectorXd hgn = a2.ldlt().solve(-g2);
                    const double gn_gain = hgn.allFinite() ? -g2.dot(hgn) : 0.0;
                    if (!(gn_gain > 1e-9 * std::max(chi2, 1e-300))) converged = true;
                }
            } else {
                lambda *= nu;
                nu *= 2.0;
                if (lambda > 1e16) {
                    converged = true;  // no downhill direction left at working precision
                    break;
                }
            }
        }
    }

    out.converged = converged;
    out.n_iterations = it;
    if (!converged)
        out.notices.push_back(fmt::format("not converged after {} iterations", problem.max_iterations));

    const auto x = ev.external(u);
    ev.residuals(x, r, &jx);
    out.chi2 = r.squaredNorm();
    out.dof = static_cast<int>(ev.n_points()) - static_cast<int>(nf);
    out.aic = out.chi2 + 2.0 * static_cast<double>(nf);
    const auto na = analyse_normal(jx);
    out.covariance = na.covariance;
    for (auto f : na.degenerate)
        out.notices.push_back(ev.specs()[ev.free()[f]].name + " is not constrained by the data");

    std::vector<double> sig(x.size(), 0.0);
    std::vector<bool> bound(x.size(), false);
    for (std::size_t f = 0; f < ev.n_free(); ++f) {
        const auto fi = static_cast<Eigen::Index>(f);
        sig[ev.free()[f]] = std::sqrt(out.covariance(fi, fi));
        bound[ev.free()[f]] = ev.transform(ev.free()[f]).at_bound(u[fi]);
    }
    const auto& specs = ev.specs();
    const std::size_t ns = problem.shared.size(), nl = problem.per_dataset.size();
    for (std::size_t k = 0; k < ns; ++k) out.shared.push_back({specs[k].name, x[k], sig[k], specs[k].fixed, bound[k]});
    Eigen::Index row = 0;
    for (std::size_t d = 0; d < problem.datasets.size(); ++d) {
        std::vector<ParamEstimate> local;
        for (std::size_t k = 0; k < nl; ++k) {
            const std::size_t idx = ns + d * nl + k;
            local.push_back({specs[idx].name, x[idx], sig[idx], specs[idx].fixed, bound[idx]});
        }
        out.per_dataset.push_back(std::move(local));
        out.dataset_tau.push_back(problem.datasets[d].tau_s);
        std::vector<double> res;
        for (std::size_t i = 0; i < problem.datasets[d].size(); ++i) res.push_back(r[row++]);
        out.residuals.push_back(std::move(res));
    }
    return out;
}

ModelFunction pcfs_voigt_binned_model(std::vector<double> node_taus) {
    if (node_taus.empty() || !std::is_sorted(node_taus.begin(), node_taus.end()) ||
        std::adjacent_find(node_taus.begin(), node_taus.end()) != node_taus.end() || !(node_taus.front() > 0.0))
        throw DomainError("pcfs_voigt_binned_model: node lags must be positive and strictly increasing");
    return [nodes = std::move(node_taus)](double x, std::span<const double> s, std::span<const double>,
                                          const Dataset& d, std::size_t, std::span<double> g) {
        const std::size_t n = nodes.size();
        if (s.size() != n + 1) throw DomainError("pcfs_voigt_binned_model: parameter count");
        const auto it = std::lower_bound(nodes.begin(), nodes.end(), d.tau_s);
        if (it == nodes.end() || *it != d.tau_s) throw DomainError("pcfs_voigt_binned_model: unknown slice lag");
        const auto j = static_cast<std::size_t>(it - nodes.begin());
        const double t2 = s[0];
        const double e = std::exp(-2.0 * x / t2);
        const double x2 = x * x;
        const bool want = !g.empty();
        if (want) std::fill(g.begin(), g.end(), 0.0);
        auto log_s = [&](std::size_t k) { return std::log(2.0) - 2.0 * std::log(s[1 + k]); };

        // ⟨exp(−δ²S(τ))⟩ and ⟨δ²S·exp(−δ²S)·∂lnS/∂lnS_k⟩ over the bin
        double mean = 0.0;
        std::vector<double> dmean(want ? n : 0, 0.0);
        const bool binned = std::isfinite(d.tau_lo) && std::isfinite(d.tau_hi) && d.tau_hi > d.tau_lo;
        if (!binned || n == 1) {
            const double sv = std::exp(log_s(j));
            mean = std::exp(-x2 * sv);
            if (want) dmean[j] = mean * x2 * sv;
        } else {
            using GL = boost::math::quadrature::gauss<double, 10>;
            const double width = d.tau_hi - d.tau_lo;
            auto piece = [&](double lo, double hi, std::size_t a, std::size_t b) {
                if (!(hi > lo)) return;
                const double la = log_s(a), lb = log_s(b), span = std::log(nodes[b] / nodes[a]);
                const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
                auto add = [&](double tau, double w) {
                    const double u = std::log(tau / nodes[a]) / span;
                    const double sv = std::exp((1.0 - u) * la + u * lb);
                    const double f = std::exp(-x2 * sv);
                    const double wt = w * half / width;
                    mean += wt * f;
                    if (want) {
                        dmean[a] += wt * f * x2 * sv * (1.0 - u);
                        dmean[b] += wt * f * x2 * sv * u;
                    }
                };
                const auto& ab = GL::abscissa();
                const auto& wt = GL::weights();
                for (std::size_t q = 0; q < ab.size(); ++q) {
                    add(mid + half * ab[q], wt[q]);
                    if (ab[q] != 0.0) add(mid - half * ab[q], wt[q]);
                }
            };
            const double lo = std::min(d.tau_lo, nodes[j]), hi = std::max(d.tau_hi, nodes[j]);
            if (j > 0) piece(lo, nodes[j], j - 1, j);
            else piece(lo, nodes[j], 0, 1);
            if (j + 1 < n) piece(nodes[j], hi, j, j + 1);
            else piece(nodes[j], hi, n - 2, n - 1);
        }
        const double m = e * mean;
        if (want) {
            g[0] = m * 2.0 * x / (t2 * t2);
            // ∂lnS_k/∂T2*_k = −2/T2*_k and ∂f/∂lnS = −δ²S·f
            for (std::size_t k = 0; k < n; ++k) g[1 + k] = e * dmean[k] * 2.0 / s[1 + k];
        }
        return m;
    };
}

// --- FTS --------------------------------------------------------------------------------------

VisibilityCurve visibility_curve(const std::vector<VisibilityEstimate>& points) {
    VisibilityCurve v;
    for (const auto& p : points) {
        v.deltas.push_back(p.delta_ns);
        v.visibility.push_back(p.visibility);
        v.sigma.push_back(p.sigma);
    }
    return v;
}

FitResult fit_fts(const VisibilityCurve& v, FtsModel model, double sigma_floor) {
    if (v.deltas.size() != v.visibility.size() || v.deltas.size() != v.sigma.size())
        throw DomainError("fit_fts: column lengths differ");
    Dataset d;
    for (std::size_t i = 0; i < v.deltas.size(); ++i) {
        if (!all_finite({v.deltas[i], v.visibility[i], v.sigma[i]})) continue;
        d.x.push_back(v.deltas[i]);
        d.y.push_back(v.visibility[i]);
        d.sigma.push_back(v.sigma[i]);
    }
    const auto s = floored(d.sigma, sigma_floor);
    const double fallback = 1e3;

    FitProblem p;
    p.datasets = {d};
    p.sigma_floor = sigma_floor;
    if (model == FtsModel::Exp) {
        p.model = FitModel::FtsExp;
        p.shared = {time_param("t2", time_from_rate(log_quadratic(d.x, d.y, s, true, false).b1, 1.0, 1.0, fallback))};
    } else if (model == FtsModel::Gauss) {
        p.model = FitModel::FtsGauss;
        p.shared = {
            time_param("t2_star", time_from_rate(log_quadratic(d.x, d.y, s, false, true).b2, 1.0, 0.5, fallback))};
    } else {
        p.model = FitModel::FtsVoigt;
        const auto q = log_quadratic(d.x, d.y, s, true, true);
        std::vector<std::pair<double, double>> starts = {
            {time_from_rate(q.b1, 1.0, 1.0, fallback), time_from_rate(q.b2, 1.0, 0.5, fallback)}};
        // nested limits as extra starts
        const double far = 1e6;
        try {
            starts.emplace_back(fit_fts(v, FtsModel::Exp, sigma_floor).param("t2").value, far);
        } catch (const DegenerateModelError&) {
        }
        try {
            starts.emplace_back(far, fit_fts(v, FtsModel::Gauss, sigma_floor).param("t2_star").value);
        } catch (const DegenerateModelError&) {
        }
        std::optional<FitResult> best;
        for (const auto& [t2, ts] : starts) {
            p.shared = {time_param("t2", t2), time_param("t2_star", ts)};
            FitResult r;
            try {
                r = fit_least_squares(p);
            } catch (const DegenerateModelError&) {
                continue;
            }
            if (!best || r.chi2 < best->chi2) best = std::move(r);
        }
        if (!best) throw DegenerateModelError("fit_fts: Voigt model is degenerate on this data");
        note_poorly_constrained(*best);
        return *best;
    }
    FitResult r = fit_least_squares(p);
    note_poorly_constrained(r);
    return r;
}

// --- PCFS ---------------------------------------------------------------------------------------

FitResult fit_pcfs_voigt_global(const PCFSSurface& surface, const SurfaceFitOptions& options) {
    auto slices = slices_from_surface(surface, options);
    auto& ds = slices.datasets;
    const double fallback = 1e3;

    // T2 from the largest-τ slice, T2*(τ) from the δ² moment with T2 held
    const auto& last = ds.back();
    const auto q = log_quadratic(last.x, last.y, floored(last.sigma, options.sigma_floor), true, true);
    double t2 = time_from_rate(q.b1, 2.0, 1.0, kNaN);
    if (!std::isfinite(t2)) {
        const auto q0 = log_quadratic(ds.front().x, ds.front().y, floored(ds.front().sigma, options.sigma_floor),
                                      true, false);
        t2 = time_from_rate(q0.b1, 2.0, 1.0, fallback);
    }
    FitProblem p;
    p.model = FitModel::PcfsVoigt;
    p.sigma_floor = options.sigma_floor;
    p.shared = {time_param("t2", t2)};
    p.per_dataset = {time_param("t2_star", fallback)};
    for (const auto& d : ds) {
        const auto m = log_quadratic(d.x, d.y, floored(d.sigma, options.sigma_floor), false, true, 2.0 / t2);
        p.per_dataset_initial.push_back({time_param("t2_star", time_from_rate(m.b2, std::sqrt(2.0), 0.5, fallback)).initial});
    }
    p.datasets = ds;

    const bool binned = options.bin_average && std::all_of(ds.begin(), ds.end(), [](const Dataset& d) {
        return std::isfinite(d.tau_lo) && d.tau_hi > d.tau_lo;
    });
    FitResult r;
    if (binned) {
        // same parameters, all shared so each slice can see its neighbours
        FitProblem b;
        b.model = FitModel::Custom;
        std::vector<double> nodes;
        for (const auto& d : ds) nodes.push_back(d.tau_s);
        b.custom = pcfs_voigt_binned_model(nodes);
        b.custom_gradient = true;
        b.sigma_floor = p.sigma_floor;
        b.datasets = ds;
        b.shared = p.shared;
        for (std::size_t j = 0; j < ds.size(); ++j) {
            ParamSpec t = p.per_dataset[0];
            t.name = fmt::format("t2_star_{}", j);
            t.initial = p.per_dataset_initial[j][0];
            b.shared.push_back(t);
        }
        r = fit_least_squares(b);
        for (std::size_t j = 0; j < ds.size(); ++j) {
            auto est = r.shared[1 + j];
            est.name = "t2_star";
            r.per_dataset[j] = {est};
        }
        r.shared.resize(1);
        r.model = to_string(FitModel::PcfsVoigt);
        r.notices.push_back("model averaged over each lag bin; T2*(tau) refers to the bin centers");
    } else {
        r = fit_least_squares(p);
    }
    r.notices.insert(r.notices.begin(), slices.notices.begin(), slices.notices.end());
    note_poorly_constrained(r);

    // linewidth tables with propagated errors
    const auto& t2e = r.param("t2");
    const auto ts = r.column("t2_star");
    const auto ts_sig = r.column_sigma("t2_star");
    const double t2_var = r.covariance(0, 0);
    std::vector<double> inhom;
    for (std::size_t j = 0; j < ts.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j + 1);
        LinewidthRow row;
        row.tau_s = ds[j].tau_s;
        // node values from the bin-averaged fit describe the center itself
        row.tau_lo = binned ? ds[j].tau_s : ds[j].tau_lo;
        row.tau_hi = binned ? ds[j].tau_s : ds[j].tau_hi;
        const auto pc = linewidths_from_times(t2e.value, ts[j], LinewidthConvention::Pcfs);
        const auto ft = linewidths_from_times(t2e.value, ts[j], LinewidthConvention::Fts);
        row.inhom_pcfs = pc.inhom_fwhm;
        row.inhom_pcfs_sigma = pc.inhom_fwhm * ts_sig[j] / ts[j];
        row.inhom_fts = ft.inhom_fwhm;
        row.inhom_fts_sigma = ft.inhom_fwhm * ts_sig[j] / ts[j];
        row.total = ft.total_fwhm;
        // ∂FWHM/∂T2 and ∂FWHM/∂T2* by central differences on the Voigt root
        const double f_l = 2.0 / t2e.value, sig = std::sqrt(2.0) / ts[j];
        const double hl = 1e-5 * f_l, hs = 1e-5 * sig;
        const double d_fl = (voigt_fwhm(f_l + hl, sig) - voigt_fwhm(f_l - hl, sig)) / (2.0 * hl);
        const double d_sig = (voigt_fwhm(f_l, sig + hs) - voigt_fwhm(f_l, sig - hs)) / (2.0 * hs);
        const double g_t2 = d_fl * (-2.0 / (t2e.value * t2e.value));
        const double g_ts = d_sig * (-std::sqrt(2.0) / (ts[j] * ts[j]));
        const double var = g_t2 * g_t2 * t2_var + g_ts * g_ts * r.covariance(jj, jj) +
                           2.0 * g_t2 * g_ts * r.covariance(0, jj);
        row.total_sigma = std::sqrt(std::max(var, 0.0));
        inhom.push_back(row.inhom_pcfs);
        r.linewidths.push_back(row);
    }
    r.inflection_tau_s = steepest(r.dataset_tau, inhom, 1.0);
    return r;
}

FitResult fit_pcfs_grj_global(const PCFSSurface& surface, const SurfaceFitOptions& options) {
    auto slices = slices_from_surface(surface, options);
    auto& ds = slices.datasets;
    const double fallback = 1e3;

    // the largest-τ slice is closest to the fully diffused Voigt (a → 0)
    const auto& last = ds.back();
    const auto q = log_quadratic(last.x, last.y, floored(last.sigma, options.sigma_floor), true, true);
    const double t2 = time_from_rate(q.b1, 2.0, 1.0, fallback);
    const double t2s = time_from_rate(q.b2, std::sqrt(2.0), 0.5, fallback);

    FitProblem p;
    p.model = FitModel::PcfsGrj;
    p.sigma_floor = options.sigma_floor;
    p.shared = {time_param("t2", t2), time_param("t2_star", t2s)};
    p.per_dataset = {{"a", 0.5, 0.0, 1.0, false, false}};
    for (const auto& d : ds) {
        // linear least squares for a with T2, T2* held: y = E·G + a·E·(1 − G)
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double e = std::exp(-2.0 * d.x[i] / t2), g = std::exp(-2.0 * d.x[i] * d.x[i] / (t2s * t2s));
            const double w = 1.0 / std::pow(std::max(d.sigma[i], options.sigma_floor), 2);
            num += w * (d.y[i] - e * g) * e * (1.0 - g);
            den += w * std::pow(e * (1.0 - g), 2);
        }
        p.per_dataset_initial.push_back({den > 0.0 ? std::clamp(num / den, 0.001, 0.999) : 0.5});
    }
    p.datasets = ds;

    FitResult r = fit_least_squares(p);
    r.notices.insert(r.notices.begin(), slices.notices.begin(), slices.notices.end());
    note_poorly_constrained(r);

    const auto a = r.column("a");
    const auto a_sig = r.column_sigma("a");
    const auto coarse = steepest(r.dataset_tau, a, -1.0);
    if (coarse) r.notices.push_back(fmt::format("steepest bin-to-bin drop of a(tau) at {:.4g} s", *coarse));

    // τSD from a(τ) = ⟨e^(−τ/τSD)⟩
    Dataset dec;
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (!(a_sig[j] > 0.0) || !std::isfinite(a_sig[j])) continue;
        dec.x.push_back(ds[j].tau_s);
        dec.y.push_back(a[j]);
        dec.sigma.push_back(a_sig[j]);
        if (std::isfinite(ds[j].tau_lo)) {
            dec.x_lo.push_back(ds[j].tau_lo);
            dec.x_hi.push_back(ds[j].tau_hi);
        }
    }
    if (dec.x_lo.size() != dec.size()) {
        dec.x_lo.clear();
        dec.x_hi.clear();
    }
    if (dec.size() >= 3) {
        double guess = std::sqrt(dec.x.front() * dec.x.back());
        for (std::size_t j = 0; j + 1 < dec.size(); ++j)
            if (dec.y[j] >= std::exp(-1.0) && dec.y[j + 1] < std::exp(-1.0)) {
                const double f = (dec.y[j] - std::exp(-1.0)) / (dec.y[j] - dec.y[j + 1]);
                guess = dec.x[j] * std::pow(dec.x[j + 1] / dec.x[j], f);
                break;
            }
        FitProblem pd;
        pd.model = FitModel::ExpDecay;
        pd.sigma_floor = 0.0;
        pd.datasets = {dec};
        pd.shared = {{"tau_sd", guess, 1e-12, 1e6, true, false}};
        try {
            const auto rd = fit_least_squares(pd);
            r.tau_sd = rd.shared[0];
            // e^(−τ/τSD) has its inflection versus ln τ at τ = τSD
            r.inflection_tau_s = rd.shared[0].value;
            if (!rd.converged) r.notices.push_back("tau_sd inverse fit did not converge");
        } catch (const DegenerateModelError& e) {
            r.notices.push_back(std::string("tau_sd inverse fit failed: ") + e.what());
        }
    } else {
        r.notices.push_back("tau_sd inverse fit skipped: fewer than 3 constrained a(tau) values");
    }
    if (!r.tau_sd) r.tau_sd_unidentifiable = true;
    return r;
}

// --- linewidth evolution -------------------------------------------------------------------------

LinewidthSeries linewidth_series(const FitResult& fit, bool inhom_only) {
    LinewidthSeries s;
    for (const auto& row : fit.linewidths) {
        s.taus.push_back(row.tau_s);
        s.linewidth.push_back(inhom_only ? row.inhom_fts : row.total);
        s.sigma.push_back(inhom_only ? row.inhom_fts_sigma : row.total_sigma);
        if (std::isfinite(row.tau_lo) && row.tau_hi > row.tau_lo) {
            s.tau_lo.push_back(row.tau_lo);
            s.tau_hi.push_back(row.tau_hi);
        }
    }
    if (s.tau_lo.size() != s.taus.size()) {
        s.tau_lo.clear();
        s.tau_hi.clear();
    }
    return s;
}

FitResult fit_ou_linewidth(const LinewidthSeries& series, double t2_ns, bool inhom_only, double sigma_floor) {
    const std::size_t n = series.taus.size();
    if (series.linewidth.size() != n || series.sigma.size() != n)
        throw DomainError("fit_ou_linewidth: column lengths differ");
    const bool bins = series.tau_lo.size() == n && series.tau_hi.size() == n;
    if (!inhom_only && !(t2_ns > 0.0)) throw DomainError("fit_ou_linewidth: T2 must be > 0");

    Dataset d;
    for (std::size_t i = 0; i < n; ++i) {
        if (!all_finite({series.taus[i], series.linewidth[i], series.sigma[i]})) continue;
        if (!(std::max(series.sigma[i], sigma_floor) > 0.0) || !(series.taus[i] > 0.0)) continue;
        d.x.push_back(series.taus[i]);
        d.y.push_back(series.linewidth[i]);
        d.sigma.push_back(series.sigma[i]);
        if (bins) {
            d.x_lo.push_back(series.tau_lo[i]);
            d.x_hi.push_back(series.tau_hi[i]);
        }
    }
    if (d.size() < 5) throw DomainError("fit_ou_linewidth: need at least 5 lag points");

    // inhomogeneous widths for the start values; the total is inverted with
    // the Olivero–Longbothum approximation
    const double f_l = inhom_only ? 0.0 : 2.0 / t2_ns;
    std::vector<double> g(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double v = d.y[i] - 0.5346 * f_l;
        g[i] = std::sqrt(std::max(v * v - 0.2166 * f_l * f_l, 0.0));
    }
    const double plateau = *std::max_element(g.begin(), g.end());
    double guess = std::sqrt(d.x.front() * d.x.back());
    const double level = plateau * std::sqrt(1.0 - std::exp(-1.0));
    for (std::size_t i = 0; i + 1 < d.size(); ++i)
        if (g[i] < level && g[i + 1] >= level) {
            const double f = (level - g[i]) / (g[i + 1] - g[i]);
            guess = d.x[i] * std::pow(d.x[i + 1] / d.x[i], f);
            break;
        }

    FitProblem p;
    p.model = inhom_only ? FitModel::OuInhomLinewidth : FitModel::OuTotalLinewidth;
    p.sigma_floor = sigma_floor;
    p.datasets = {d};
    p.shared = {{"dw_inf", std::max(plateau, 1e-3), 1e-6, 1e6, true, false},
                {"tau_sd", std::clamp(guess, 2e-12, 5e5), 1e-12, 1e6, true, false}};
    if (!inhom_only) p.shared.push_back({"t2", t2_ns, 0.0, kInf, true, true});

    FitResult r;
    try {
        r = fit_least_squares(p);
    } catch (const DegenerateModelError& e) {
        r.model = to_string(p.model);
        for (const auto& s : p.shared) r.shared.push_back({s.name, s.initial, kInf, s.fixed, false});
        r.notices.push_back(std::string("degenerate: ") + e.what());
        r.tau_sd_unidentifiable = true;
        return r;
    }
    const auto& tsd = r.param("tau_sd");
    if (tsd.value < d.x.front() || tsd.value > d.x.back() || !(tsd.sigma / tsd.value <= 1.0)) {
        r.tau_sd_unidentifiable = true;
        r.notices.push_back(fmt::format("tau_sd = {:.4g} s is not identified by lags {:.3g}..{:.3g} s", tsd.value,
                                        d.x.front(), d.x.back()));
    }
    return r;
}

// --- reporting -------------------------------------------------------------------------------------

double aic_difference(const FitResult& a, const FitResult& b) { return b.aic - a.aic; }

std::string format_report(const FitResult& r) {
    std::string s;
    auto line = [&](const std::string& t) { s += t + "\n"; };
    line("model: " + r.model);
    line(fmt::format("converged: {} ({} iterations)", r.converged ? "yes" : "no", r.n_iterations));
    line(fmt::format("chi2: {:.10g}  dof: {}  chi2/dof: {:.6g}  AIC: {:.10g}", r.chi2, r.dof, r.reduced_chi2(),
                     r.aic));
    line("parameters:");
    for (const auto& p : r.shared)
        line(fmt::format("  {:<8} = {:.10g} ± {:.4g}{}{}", p.name, p.value, p.sigma, p.fixed ? " (fixed)" : "",
                         p.at_bound ? " (at bound)" : ""));
    if (r.tau_sd)
        line(fmt::format("  tau_sd   = {:.10g} ± {:.4g} s (from a(tau))", r.tau_sd->value, r.tau_sd->sigma));
    if (r.inflection_tau_s) line(fmt::format("  steepest change at tau = {:.6g} s", *r.inflection_tau_s));
    if (r.tau_sd_unidentifiable) line("  tau_sd unidentifiable");
    if (!r.per_dataset.empty() && !r.per_dataset.front().empty()) {
        line("per-slice parameters:");
        std::string head = fmt::format("  {:>14}", "tau_s");
        for (const auto& p : r.per_dataset.front()) head += fmt::format(" {:>16} {:>12}", p.name, "sigma");
        line(head);
        for (std::size_t j = 0; j < r.per_dataset.size(); ++j) {
            std::string row = fmt::format("  {:>14.6g}", r.dataset_tau[j]);
            for (const auto& p : r.per_dataset[j]) row += fmt::format(" {:>16.10g} {:>12.4g}", p.value, p.sigma);
            line(row);
        }
    }
    if (!r.linewidths.empty()) {
        line("linewidths (GHz, dw/2pi; inhom_pcfs = 4*sqrt(2)/T2*, inhom_fts = 4*sqrt(ln2)/T2*):");
        line(fmt::format("  {:>14} {:>12} {:>10} {:>12} {:>10} {:>12} {:>10}", "tau_s", "inhom_pcfs", "sigma",
                         "inhom_fts", "sigma", "total", "sigma"));
        for (const auto& w : r.linewidths)
            line(fmt::format("  {:>14.6g} {:>12.6g} {:>10.3g} {:>12.6g} {:>10.3g} {:>12.6g} {:>10.3g}", w.tau_s,
                             to_ghz(w.inhom_pcfs), to_ghz(w.inhom_pcfs_sigma), to_ghz(w.inhom_fts),
                             to_ghz(w.inhom_fts_sigma), to_ghz(w.total), to_ghz(w.total_sigma)));
    }
    for (const auto& n : r.notices) line("note: " + n);
    return s;
}

}  // namespace pcfs
