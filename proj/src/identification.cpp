/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "hallcal/identification.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <functional>
#include <optional>
#include <string>
#include <thread>

#include "hallcal/errors.hpp"
#include "hallcal/fft.hpp"

namespace hallcal::ident {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Crossing {
    std::size_t index = 0;  // sample at or before the last 2 pi n upcrossing
    int rotations = 0;
    double value_at_index = 0.0;    // locally regressed angle at that sample
    double instant_samples = 0.0;   // regressed crossing instant, fractional
    double slope_per_sample = 0.0;
};

/// Last upcrossing of the highest reached 2 pi multiple. The crossing is
/// located on a local linear regression of the trajectory: a single noisy
/// sample then neither moves the crossing nor pollutes the sub-sample
/// mismatch that the scale estimate minimizes, and a window spanning one
/// reconstruction-ripple period averages the periodic error out entirely.
std::optional<Crossing> last_full_rotation(const Eigen::VectorXd& y, std::size_t window_half) {
    std::optional<std::size_t> raw;
    int rotations = 0;
    for (Eigen::Index k = 1; k < y.size(); ++k) {
        const int before = static_cast<int>(std::floor(y(k - 1) / kTwoPi));
        const int after = static_cast<int>(std::floor(y(k) / kTwoPi));
        if (after > before && after >= 1) {
            raw = static_cast<std::size_t>(k - 1);
            rotations = after;
        }
    }
    if (!raw) {
        return std::nullopt;
    }
    const double level = kTwoPi * rotations;

    const std::size_t n = static_cast<std::size_t>(y.size());
    const std::size_t lo = *raw > window_half ? *raw - window_half : 0;
    const std::size_t hi = std::min(n - 1, *raw + window_half);
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const auto count = static_cast<double>(hi - lo + 1);
    for (std::size_t k = lo; k <= hi; ++k) {
        const double x = static_cast<double>(k) - static_cast<double>(*raw);
        const double v = y(static_cast<Eigen::Index>(k));
        sx += x;
        sy += v;
        sxx += x * x;
        sxy += x * v;
    }
    const double denom = count * sxx - sx * sx;
    const double slope = (count * sxy - sx * sy) / denom;
    const double intercept = (sy - slope * sx) / count;
    if (!(slope > 0.0)) {
        // not locally increasing; fall back to the raw sample
        return Crossing{*raw, rotations, y(static_cast<Eigen::Index>(*raw)),
                        static_cast<double>(*raw), 0.0};
    }

    // fitted instant of the level crossing, then the sample at or before it
    const double t_star = (level - intercept) / slope;  // relative to *raw
    double p_rel = std::floor(t_star);
    double fitted = intercept + slope * p_rel;
    // keep the regressed value strictly below the level ("at or before")
    if (fitted >= level) {
        p_rel -= 1.0;
        fitted = intercept + slope * p_rel;
    }
    const double instant = static_cast<double>(*raw) + t_star;
    double p_abs = static_cast<double>(*raw) + p_rel;
    if (p_abs < 0.0 || p_abs >= static_cast<double>(n)) {
        p_abs = static_cast<double>(*raw);
        fitted = y(static_cast<Eigen::Index>(*raw));
    }
    return Crossing{static_cast<std::size_t>(p_abs), rotations, fitted, instant, slope};
}

std::optional<Crossing> last_full_rotation(const std::vector<double>& y,
                                           std::size_t window_half) {
    return last_full_rotation(
        Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())),
        window_half);
}

/// Window covering one full period of the n_m-periodic reconstruction error
/// at the local rotation speed, so the ripple and all its harmonics average
/// to zero inside the crossing regression.
std::size_t ripple_period_window(const std::optional<Crossing>& coarse, int n_m,
                                 std::size_t record_length) {
    std::size_t window_half = 50;
    if (coarse && coarse->slope_per_sample > 0.0 && n_m > 0) {
        const double period =
            kTwoPi / (static_cast<double>(n_m) * coarse->slope_per_sample);
        window_half = static_cast<std::size_t>(std::llround(period / 2.0));
    }
    return std::clamp<std::size_t>(window_half, 50, record_length / 6);
}

std::complex<double> polyval(const std::vector<double>& coeffs_desc, std::complex<double> z) {
    std::complex<double> acc(0.0, 0.0);
    for (double c : coeffs_desc) {
        acc = acc * z + c;
    }
    return acc;
}

double max_root_magnitude(const std::vector<double>& monic_desc) {
    const std::size_t n = monic_desc.size() - 1;
    if (n == 0) {
        return 0.0;
    }
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                      static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        companion(0, static_cast<Eigen::Index>(i)) = -monic_desc[i + 1];
    }
    for (std::size_t i = 1; i < n; ++i) {
        companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
    }
    return companion.eigenvalues().cwiseAbs().maxCoeff();
}

struct RationalFit {
    std::vector<double> num;  // descending powers of q
    std::vector<double> den;  // monic, descending powers of q
    double weighted_residual = std::numeric_limits<double>::infinity();
};

std::vector<double> poly_multiply(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            out[i + j] += a[i] * b[j];
        }
    }
    return out;
}

/// Sanathanan-Koerner iteration: weighted linear least squares on
/// B(z) - G' A(z) with G' = G (z-1)^n_int z^{delay}. The weights combine
/// the usual 1/|full denominator|^2 with the measured per-bin FRF variance
/// so noisy bins do not steer the fit. Integrator poles are pinned at q = 1
/// rather than estimated; a free pole that lands just outside the unit
/// circle turns long closed-loop simulations unstable.
RationalFit fit_rational(const std::vector<double>& freqs_hz,
                         const std::vector<std::complex<double>>& frf,
                         const std::vector<double>& frf_variance, double sample_time,
                         int poles, int zeros, int integrators, int delay, int iterations) {
    if (integrators < 0 || integrators > poles) {
        throw ConfigError("fit_rational: integrator count must lie in [0, poles]");
    }
    const int na = poles - integrators;
    const int nb = zeros;
    const std::size_t nf = freqs_hz.size();
    const std::size_t n_params = static_cast<std::size_t>(nb + 1 + na);
    if (2 * nf < n_params) {
        throw NumericalError("fit_rational: not enough frequency bins for the requested order");
    }

    std::vector<std::complex<double>> z(nf);
    std::vector<std::complex<double>> g_mod(nf);
    for (std::size_t i = 0; i < nf; ++i) {
        const double w = kTwoPi * freqs_hz[i] * sample_time;
        z[i] = std::polar(1.0, w);
        std::complex<double> g = frf[i] * std::pow(z[i], delay);
        for (int q = 0; q < integrators; ++q) {
            g *= z[i] - 1.0;
        }
        g_mod[i] = g;
    }

    std::vector<double> noise_weight(nf, 1.0);
    if (frf_variance.size() == nf) {
        double var_floor = std::numeric_limits<double>::infinity();
        for (double v : frf_variance) {
            if (v > 0.0) {
                var_floor = std::min(var_floor, v);
            }
        }
        if (std::isfinite(var_floor)) {
            for (std::size_t i = 0; i < nf; ++i) {
                noise_weight[i] = 1.0 / std::max(frf_variance[i], var_floor);
            }
        }
    }

    std::vector<double> weights(nf);
    for (std::size_t i = 0; i < nf; ++i) {
        // initial weight from the pinned factors alone
        double mag = 1.0;
        for (int q = 0; q < integrators; ++q) {
            mag *= std::abs(z[i] - 1.0);
        }
        weights[i] = noise_weight[i] / std::max(mag * mag, 1e-12);
    }

    Eigen::VectorXd params = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params));
    for (int it = 0; it < iterations; ++it) {
        Eigen::MatrixXd design(2 * nf, n_params);
        Eigen::VectorXd rhs(2 * nf);
        for (std::size_t i = 0; i < nf; ++i) {
            const std::complex<double> zi = z[i];
            const double wt = std::sqrt(weights[i]);
            for (int j = 0; j <= nb; ++j) {
                const std::complex<double> v = std::pow(zi, nb - j) * wt;
                design(2 * i, static_cast<Eigen::Index>(j)) = v.real();
                design(2 * i + 1, static_cast<Eigen::Index>(j)) = v.imag();
            }
            for (int j = 1; j <= na; ++j) {
                const std::complex<double> v = -g_mod[i] * std::pow(zi, na - j) * wt;
                design(2 * i, static_cast<Eigen::Index>(nb + j)) = v.real();
                design(2 * i + 1, static_cast<Eigen::Index>(nb + j)) = v.imag();
            }
            const std::complex<double> b = g_mod[i] * std::pow(zi, na) * wt;
            rhs(2 * i) = b.real();
            rhs(2 * i + 1) = b.imag();
        }
        params = design.colPivHouseholderQr().solve(rhs);
        for (std::size_t i = 0; i < nf; ++i) {
            std::vector<double> den(static_cast<std::size_t>(na) + 1);
            den[0] = 1.0;
            for (int j = 1; j <= na; ++j) {
                den[static_cast<std::size_t>(j)] = params(nb + j);
            }
            double mag = std::abs(polyval(den, z[i]));
            for (int q = 0; q < integrators; ++q) {
                mag *= std::abs(z[i] - 1.0);
            }
            weights[i] = noise_weight[i] / std::max(mag * mag, 1e-12);
        }
    }

    RationalFit fit;
    fit.num.resize(static_cast<std::size_t>(nb) + 1);
    for (int j = 0; j <= nb; ++j) {
        fit.num[static_cast<std::size_t>(j)] = params(j);
    }
    std::vector<double> den(static_cast<std::size_t>(na) + 1);
    den[0] = 1.0;
    for (int j = 1; j <= na; ++j) {
        den[static_cast<std::size_t>(j)] = params(nb + j);
    }
    for (int q = 0; q < integrators; ++q) {
        den = poly_multiply(den, {1.0, -1.0});
    }
    // delay folds into the denominator as q^delay
    for (int j = 0; j < delay; ++j) {
        den.push_back(0.0);
    }
    fit.den = std::move(den);

    double err = 0.0;
    double ref = 0.0;
    for (std::size_t i = 0; i < nf; ++i) {
        const std::complex<double> model = polyval(fit.num, z[i]) / polyval(fit.den, z[i]);
        err += std::norm(model - frf[i]);
        ref += std::norm(frf[i]);
    }
    fit.weighted_residual = std::sqrt(err / std::max(ref, 1e-300));
    return fit;
}

}  // namespace

BlaEstimate estimate_bla(const std::vector<sim::Dataset>& experiments,
                         const BlaFitOptions& options) {
    if (experiments.size() < 2) {
        throw ConfigError("estimate_bla: need at least two multisine realizations");
    }

    const sim::Dataset& first = experiments.front();
    if (first.reference.is_ramp()) {
        throw ConfigError("estimate_bla: experiments must use multisine references");
    }
    const std::size_t period = sim::multisine_period_samples(first.reference);
    const double fs = first.reference.sample_rate_hz;
    const auto& lines = first.reference.multisine().frequencies_hz;
    const std::size_t n_lines = lines.size();

    std::vector<std::size_t> bins(n_lines);
    for (std::size_t j = 0; j < n_lines; ++j) {
        bins[j] = static_cast<std::size_t>(
            std::llround(lines[j] * static_cast<double>(period) / fs));
    }

    const std::size_t n_real = experiments.size();
    Eigen::MatrixXcd u(n_real, n_lines);  // Y / R per realization
    Eigen::MatrixXcd v(n_real, n_lines);  // T / R per realization

    for (std::size_t i = 0; i < n_real; ++i) {
        const sim::Dataset& ds = experiments[i];
        ds.validate();
        if (ds.reference.is_ramp() ||
            sim::multisine_period_samples(ds.reference) != period ||
            ds.reference.multisine().frequencies_hz != lines) {
            throw ConfigError("estimate_bla: realizations use inconsistent multisine grids");
        }
        const std::size_t periods = ds.size() / period;
        if (periods * period != ds.size()) {
            throw ConfigError("estimate_bla: record is not an integer number of periods");
        }
        if (periods < 2) {
            throw ConfigError("estimate_bla: need at least two periods per realization");
        }
        for (std::size_t j = 0; j < n_lines; ++j) {
            std::complex<double> yf(0.0, 0.0);
            std::complex<double> tf(0.0, 0.0);
            std::complex<double> rf(0.0, 0.0);
            // discard the first period as transient, average the rest
            for (std::size_t p = 1; p < periods; ++p) {
                const std::size_t off = p * period;
                yf += dft_bin(ds.y.data() + off, period, bins[j]);
                tf += dft_bin(ds.torque.data() + off, period, bins[j]);
                rf += dft_bin(ds.r.data() + off, period, bins[j]);
            }
            if (std::abs(rf) == 0.0) {
                throw NumericalError("estimate_bla: reference has no power at an excited bin");
            }
            u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = yf / rf;
            v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = tf / rf;
        }
    }

    BlaEstimate est;
    est.freqs_hz = lines;
    est.frf.resize(n_lines);
    est.frf_variance.resize(n_lines);
    for (std::size_t j = 0; j < n_lines; ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        const std::complex<double> mu = u.col(col).mean();
        const std::complex<double> mv = v.col(col).mean();
        if (std::abs(mv) == 0.0) {
            throw NumericalError("estimate_bla: torque has no power at an excited bin");
        }
        est.frf[j] = mu / mv;
        // spread of the per-realization ratios around their mean
        std::complex<double> g_mean(0.0, 0.0);
        for (std::size_t i = 0; i < n_real; ++i) {
            g_mean += u(static_cast<Eigen::Index>(i), col) / v(static_cast<Eigen::Index>(i), col);
        }
        g_mean /= static_cast<double>(n_real);
        double var = 0.0;
        for (std::size_t i = 0; i < n_real; ++i) {
            var += std::norm(u(static_cast<Eigen::Index>(i), col) /
                                 v(static_cast<Eigen::Index>(i), col) -
                             g_mean);
        }
        est.frf_variance[j] =
            var / (static_cast<double>(n_real - 1) * static_cast<double>(n_real));
    }

    const double ts = first.sample_time;
    RationalFit best;
    for (int delay = 0; delay <= options.delay_allowance; ++delay) {
        RationalFit fit =
            fit_rational(est.freqs_hz, est.frf, est.frf_variance, ts, options.poles,
                         options.zeros, options.integrators, delay, options.sk_iterations);
        if (fit.weighted_residual < best.weighted_residual) {
            best = std::move(fit);
        }
    }
    if (!std::isfinite(best.weighted_residual) || best.weighted_residual > 0.5) {
        throw NumericalError("estimate_bla: rational fit did not converge (relative residual " +
                             std::to_string(best.weighted_residual) + ")");
    }

    est.fit_residual = best.weighted_residual;
    est.max_pole_magnitude = max_root_magnitude(best.den);
    est.model = lti::tf_to_ss(lti::DiscreteTransferFunction(best.num, best.den, ts));
    return est;
}

ScaleEstimate estimate_scale(const BlaEstimate& bla, const sim::Dataset& data,
                             const Eigen::VectorXd& theta0, const flux::BasisDescriptor& basis,
                             int n_m, const lti::DiscreteStateSpace& controller,
                             const ScaleEstimateOptions& options) {
    data.validate();
    const auto coarse = last_full_rotation(data.y, 50);
    if (!coarse) {
        throw NumericalError("estimate_scale: dataset contains no full mechanical rotation");
    }
    const std::size_t window_half = ripple_period_window(coarse, n_m, data.size());
    const auto data_crossing = last_full_rotation(data.y, window_half);

    ScaleEstimate out;
    out.crossing_index_data = data_crossing->index;
    out.rotations_data = data_crossing->rotations;

    // The raw sample-value mismatch of eq. (22) wraps by one sample step
    // whenever the crossings slip a whole sample apart, which creates
    // spurious zero-cost minima. The regressed crossings give continuous
    // instants, so the mismatch is evaluated unwrapped: the gap between the
    // simulated crossing event and the data trajectory extrapolated along
    // its own crossing line. Within one sample this equals the plain value
    // mismatch at the crossing samples.
    const auto probe = [&](double c) {
        const sim::ModelSimResult res =
            sim::simulate_model(theta0, basis, n_m, bla.model.scaled_input(1.0 / c), controller,
                                data.r);
        if (res.diverged) {
            return std::numeric_limits<double>::infinity();
        }
        // Candidate loops near the stability edge ring without tripping the
        // divergence bound inside a short record, and a ringing crossing
        // sweeps through spurious zero mismatches as c varies. The simulated
        // loop is noise-free, so a healthy candidate settles to an almost
        // constant tracking error; reject candidates whose error keeps
        // oscillating near the crossing.
        const std::size_t tail_start = (data.r.size() * 3) / 4;
        double mean_e = 0.0;
        for (std::size_t k = tail_start; k < data.r.size(); ++k) {
            mean_e += data.r[k] - res.y_sim(static_cast<Eigen::Index>(k));
        }
        mean_e /= static_cast<double>(data.r.size() - tail_start);
        double var_e = 0.0;
        for (std::size_t k = tail_start; k < data.r.size(); ++k) {
            const double e = data.r[k] - res.y_sim(static_cast<Eigen::Index>(k));
            var_e += (e - mean_e) * (e - mean_e);
        }
        var_e /= static_cast<double>(data.r.size() - tail_start);
        if (std::sqrt(var_e) > 0.2 * std::abs(mean_e) + 1e-9) {
            return std::numeric_limits<double>::infinity();
        }
        const auto sim_crossing = last_full_rotation(res.y_sim, window_half);
        if (!sim_crossing) {
            return std::numeric_limits<double>::infinity();
        }
        const double mismatch =
            kTwoPi * (sim_crossing->rotations - data_crossing->rotations) -
            data_crossing->slope_per_sample *
                (sim_crossing->instant_samples - data_crossing->instant_samples);
        return mismatch * mismatch;
    };

    const double log_lo = std::log(options.bracket_lo);
    const double log_hi = std::log(options.bracket_hi);
    int best_idx = -1;
    double best_cost = std::numeric_limits<double>::infinity();
    std::vector<double> grid(static_cast<std::size_t>(options.scan_points));
    for (int i = 0; i < options.scan_points; ++i) {
        const double c = std::exp(log_lo + (log_hi - log_lo) * static_cast<double>(i) /
                                               static_cast<double>(options.scan_points - 1));
        grid[static_cast<std::size_t>(i)] = c;
        const double cost = probe(c);
        out.scan_c.push_back(c);
        out.scan_cost.push_back(cost);
        if (cost < best_cost) {
            best_cost = cost;
            best_idx = i;
        }
    }
    if (best_idx < 0 || !std::isfinite(best_cost)) {
        std::string msg = "estimate_scale: no candidate produced a comparable full rotation; "
                          "scan:";
        for (std::size_t i = 0; i < out.scan_c.size(); i += 7) {
            msg += " c=" + std::to_string(out.scan_c[i]) + " J=" + std::to_string(out.scan_cost[i]);
        }
        throw NumericalError(msg);
    }

    double lo = grid[static_cast<std::size_t>(std::max(best_idx - 1, 0))];
    double hi = grid[static_cast<std::size_t>(
        std::min(best_idx + 1, options.scan_points - 1))];

    // golden-section refinement on the aligned branch
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo;
    double b = hi;
    double x1 = b - gr * (b - a);
    double x2 = a + gr * (b - a);
    double f1 = probe(x1);
    double f2 = probe(x2);
    while ((b - a) > options.golden_rel_tol * (std::abs(a) + std::abs(b))) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = probe(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = probe(x2);
        }
    }
    out.c_hat = 0.5 * (a + b);
    return out;
}

SemProblem SemProblem::from_dataset(const sim::Dataset& data, BlaEstimate bla,
                                    lti::DiscreteStateSpace controller,
                                    flux::BasisDescriptor basis, int n_m, Eigen::VectorXd theta0,
                                    OptimizerSettings settings) {
    data.validate();
    SemProblem p;
    p.d_measured = data.d;
    p.reference = data.r;
    p.sample_time = data.sample_time;
    p.bla = std::move(bla);
    p.controller = std::move(controller);
    p.basis = std::move(basis);
    p.n_m = n_m;
    p.theta0 = std::move(theta0);
    p.settings = settings;
    p.optimize_hyperparameters = !p.basis.is_fourier();
    return p;
}

void SemProblem::validate() const {
    if (!bla.scale_corrected) {
        throw ConfigError("sem problem: BLA must be scale-corrected first");
    }
    if (std::abs(bla.model.sample_time - sample_time) > 1e-12 ||
        std::abs(controller.sample_time - sample_time) > 1e-12) {
        throw ConfigError("sem problem: sample rates of data and models differ");
    }
    if (theta0.size() != 3 * basis.dimension()) {
        throw ConfigError("sem problem: theta0 length does not match the basis");
    }
    if (static_cast<std::size_t>(d_measured.rows()) != reference.size()) {
        throw ConfigError("sem problem: data and reference lengths differ");
    }
}

Eigen::VectorXd SemProblem::initial_parameters() const {
    if (!optimize_hyperparameters || basis.is_fourier()) {
        return theta0;
    }
    const auto& k = basis.kernel();
    Eigen::VectorXd params(theta0.size() + 2);
    params.head(theta0.size()) = theta0;
    params(theta0.size()) = 0.5 * std::log(k.signal_variance);  // log sigma_f
    params(theta0.size() + 1) = std::log(k.length_scale);
    return params;
}

flux::BasisDescriptor SemProblem::basis_for(const Eigen::VectorXd& params) const {
    if (!optimize_hyperparameters || basis.is_fourier()) {
        return basis;
    }
    flux::PeriodicKernelBasis k = basis.kernel();
    const Eigen::Index nt = 3 * basis.dimension();
    k.signal_variance = std::exp(2.0 * params(nt));
    k.length_scale = std::exp(params(nt + 1));
    return flux::BasisDescriptor{k};
}

Eigen::VectorXd SemProblem::theta_part(const Eigen::VectorXd& params) const {
    return params.head(3 * basis.dimension());
}

double sem_cost(const Eigen::VectorXd& params, const SemProblem& problem) {
    if (!problem.bla.scale_corrected) {
        throw ConfigError("sem_cost: BLA must be scale-corrected first");
    }
    const flux::BasisDescriptor basis = problem.basis_for(params);
    return sim::simulate_model_residual(problem.theta_part(params), basis, problem.n_m,
                                        problem.bla.model, problem.controller, problem.reference,
                                        problem.d_measured, problem.limits);
}

namespace {

unsigned worker_count(const OptimizerSettings& s, Eigen::Index n) {
    unsigned n_threads = s.threads > 0 ? static_cast<unsigned>(s.threads)
                                       : std::max(1u, std::thread::hardware_concurrency());
    return std::min<unsigned>(n_threads, static_cast<unsigned>(n));
}

void parallel_columns(Eigen::Index n, unsigned threads, const std::function<void(Eigen::Index)>& body) {
    if (threads <= 1) {
        for (Eigen::Index i = 0; i < n; ++i) {
            body(i);
        }
        return;
    }
    std::atomic<Eigen::Index> counter{0};
    const auto worker = [&]() {
        while (true) {
            const Eigen::Index i = counter.fetch_add(1);
            if (i >= n) {
                break;
            }
            body(i);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back(worker);
    }
    for (auto& th : pool) {
        th.join();
    }
}

/// Stacked residual d_measured - d_sim as one 3N vector; false on divergence.
bool sem_residual(const Eigen::VectorXd& params, const SemProblem& problem,
                  Eigen::VectorXd& out) {
    const flux::BasisDescriptor basis = problem.basis_for(params);
    const sim::ModelSimResult res =
        sim::simulate_model(problem.theta_part(params), basis, problem.n_m, problem.bla.model,
                            problem.controller, problem.reference, problem.limits);
    if (res.diverged) {
        return false;
    }
    const Eigen::Index n = res.d_sim.rows();
    out.resize(3 * n);
    for (Eigen::Index ch = 0; ch < 3; ++ch) {
        out.segment(ch * n, n) = problem.d_measured.col(ch) - res.d_sim.col(ch);
    }
    return true;
}

}  // namespace

Eigen::VectorXd sem_gradient(const Eigen::VectorXd& params, const SemProblem& problem) {
    const OptimizerSettings& s = problem.settings;
    const Eigen::Index n = params.size();
    Eigen::VectorXd grad(n);
    parallel_columns(n, worker_count(s, n), [&](Eigen::Index i) {
        Eigen::VectorXd local = params;
        const double h = std::max(s.fd_step_abs, s.fd_step_rel * std::abs(params(i)));
        local(i) = params(i) + h;
        const double jp = sem_cost(local, problem);
        local(i) = params(i) - h;
        const double jm = sem_cost(local, problem);
        grad(i) = (jp - jm) / (2.0 * h);
    });
    return grad;
}

namespace {

struct LmOutcome {
    Eigen::VectorXd x;
    int iterations = 0;
    bool stalled = false;
};

/// Sensor noise variance estimated from second differences of the measured
/// voltages; at the sample rates in use the motion-induced curvature term is
/// orders of magnitude below the noise contribution 6 sigma^2.
double estimate_noise_variance(const Eigen::MatrixXd& d) {
    const Eigen::Index n = d.rows();
    if (n < 8) {
        return 0.0;
    }
    double acc = 0.0;
    const Eigen::Index start = n / 2;  // skip the spin-up transient
    for (Eigen::Index ch = 0; ch < 3; ++ch) {
        for (Eigen::Index k = start; k + 2 < n; ++k) {
            const double second = d(k + 2, ch) - 2.0 * d(k + 1, ch) + d(k, ch);
            acc += second * second;
        }
    }
    const auto count = static_cast<double>(3 * (n - 2 - start));
    return acc / count / 6.0;
}

/// Damped Gauss-Newton (Levenberg-Marquardt) on the stacked residuals with a
/// central finite-difference Jacobian. When `directions` is non-null the
/// steps are confined to its column span (stage-one solves); otherwise the
/// full parameter space is used. A positive `discrepancy_level` stops the
/// iteration once the cost is consistent with the measured noise power:
/// grinding further only fits noise along weakly determined directions.
LmOutcome lm_minimize(const SemProblem& problem, Eigen::VectorXd x0,
                      const Eigen::MatrixXd* directions, const OptimizerSettings& s,
                      std::vector<double>& j_trace, double discrepancy_level = 0.0) {
    const Eigen::Index n = x0.size();
    const Eigen::Index k = directions ? directions->cols() : n;
    const unsigned threads = worker_count(s, k);

    LmOutcome out;
    out.x = std::move(x0);

    Eigen::VectorXd residual;
    if (!sem_residual(out.x, problem, residual)) {
        throw NumericalError("solve_sem: initial parameters destabilize the simulation");
    }
    double j_current = residual.squaredNorm();
    if (j_trace.empty()) {
        j_trace.push_back(j_current);
    }
    if (discrepancy_level > 0.0 && j_current <= discrepancy_level) {
        return out;
    }

    const Eigen::Index m = residual.size();
    Eigen::MatrixXd jacobian(m, k);
    // Damping is relative to the largest eigenvalue of the scaled normal
    // matrix; the first steps start strongly damped so the large initial
    // correction stays inside the well-determined subspace.
    double lambda = 0.1;
    constexpr double kLambdaFloor = 1e-5;
    int slow_iterations = 0;

    for (int iter = 0; iter < s.max_iterations; ++iter) {
        // residual Jacobian by central differences, one column per direction
        parallel_columns(k, threads, [&](Eigen::Index i) {
            Eigen::VectorXd plus;
            Eigen::VectorXd minus;
            const double along = directions ? 0.0 : out.x(i);
            const double h = std::max(s.fd_step_abs, s.fd_step_rel * std::abs(along));
            Eigen::VectorXd local = out.x;
            if (directions) {
                local += h * directions->col(i);
            } else {
                local(i) += h;
            }
            const bool ok_p = sem_residual(local, problem, plus);
            if (directions) {
                local = out.x - h * directions->col(i);
            } else {
                local(i) = out.x(i) - h;
            }
            const bool ok_m = sem_residual(local, problem, minus);
            if (!ok_p || !ok_m) {
                jacobian.col(i).setZero();
                return;
            }
            jacobian.col(i) = (plus - minus) / (2.0 * h);  // d residual / d direction_i
        });

        const Eigen::MatrixXd normal = jacobian.transpose() * jacobian;
        const Eigen::VectorXd rhs = -(jacobian.transpose() * residual);

        // The spectral cutoff drops reparameterizing warp directions that
        // the data constrains only at the noise level. Coefficients share a
        // common unit; only appended log hyperparameters get a sensitivity
        // scale so the shared cutoff stays meaningful for them.
        Eigen::VectorXd col_scale = Eigen::VectorXd::Ones(k);
        if (!directions) {
            const Eigen::Index n_theta = 3 * problem.basis.dimension();
            const double theta_sensitivity =
                std::sqrt(std::max(normal.diagonal().head(n_theta).maxCoeff(), 1e-300));
            for (Eigen::Index i = n_theta; i < k; ++i) {
                col_scale(i) = std::sqrt(std::max(normal(i, i), 1e-300)) / theta_sensitivity;
            }
        }
        const Eigen::MatrixXd scaled = col_scale.cwiseInverse().asDiagonal() * normal *
                                       col_scale.cwiseInverse().asDiagonal();
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled);
        const Eigen::VectorXd eigenvalues = eig.eigenvalues();
        const double spectral_floor = eigenvalues(k - 1) * s.spectral_cutoff;
        const Eigen::VectorXd rhs_scaled =
            eig.eigenvectors().transpose() * (rhs.cwiseQuotient(col_scale));

        bool accepted = false;
        Eigen::VectorXd x_next;
        Eigen::VectorXd residual_next;
        double j_next = j_current;
        for (int attempt = 0; attempt < 30 && !accepted; ++attempt) {
            const double damping = lambda * eigenvalues(k - 1);
            Eigen::VectorXd coeff(k);
            for (Eigen::Index i = 0; i < k; ++i) {
                coeff(i) = eigenvalues(i) >= spectral_floor
                               ? rhs_scaled(i) / (eigenvalues(i) + damping)
                               : 0.0;
            }
            Eigen::VectorXd step = (eig.eigenvectors() * coeff).cwiseQuotient(col_scale);
            if (directions) {
                step = (*directions) * step;
            }
            // backtracking along the damped step as an extra safeguard
            double alpha = 1.0;
            for (int ls = 0; ls < 4; ++ls) {
                x_next = out.x + alpha * step;
                if (sem_residual(x_next, problem, residual_next)) {
                    j_next = residual_next.squaredNorm();
                    if (j_next < j_current) {
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.25;
            }
            if (!accepted) {
                lambda *= 8.0;
                if (lambda > 1e12) {
                    break;
                }
            }
        }
        if (!accepted) {
            out.stalled = j_trace.size() == 1;
            break;
        }
        lambda = std::max(lambda / 4.0, kLambdaFloor);

        const double improvement = (j_current - j_next) / std::max(j_current, 1e-300);
        out.x = std::move(x_next);
        residual = std::move(residual_next);
        j_current = j_next;
        j_trace.push_back(j_current);
        ++out.iterations;
        if (discrepancy_level > 0.0 && j_current <= discrepancy_level) {
            break;
        }
        // slow progress under heavy damping means the trust region is still
        // recovering, not that the minimum is reached
        slow_iterations =
            (improvement < s.tolerance && lambda <= 1e-2) ? slow_iterations + 1 : 0;
        if (slow_iterations >= 2) {
            break;
        }
    }
    return out;
}

/// Span of the harmonic function space up to the carrier (constant plus
/// sin/cos of 1..n_m), expressed in kernel weights, one block per channel.
/// Confining the first solve to this subspace reproduces the structural
/// warp-freedom of a truncated Fourier basis; the full kernel space is only
/// released once the iterate sits near the carrier-band optimum, from where
/// the full problem is locally well behaved.
Eigen::MatrixXd harmonic_subspace(const SemProblem& problem) {
    const auto& kb = problem.basis.kernel();
    const Eigen::Index m = kb.centers.size();
    const int n_h = problem.n_m;
    const Eigen::Index k_funcs = 2 * static_cast<Eigen::Index>(n_h) + 1;

    Eigen::MatrixXd design(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        design.row(i) = flux::kernel_basis(kb.centers(i), kb);
    }
    Eigen::MatrixXd normal = design.transpose() * design;
    normal.diagonal().array() += 1e-8 * kb.signal_variance;
    const Eigen::LDLT<Eigen::MatrixXd> solver(normal);

    Eigen::MatrixXd block(m, k_funcs);
    for (Eigen::Index f = 0; f < k_funcs; ++f) {
        Eigen::VectorXd target(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double y = kb.centers(i);
            if (f == 0) {
                target(i) = 1.0;
            } else if (f % 2 == 1) {
                target(i) = std::sin(static_cast<double>((f + 1) / 2) * y);
            } else {
                target(i) = std::cos(static_cast<double>(f / 2) * y);
            }
        }
        block.col(f) = solver.solve(design.transpose() * target);
    }

    const Eigen::Index n = problem.initial_parameters().size();
    Eigen::MatrixXd span = Eigen::MatrixXd::Zero(n, 3 * k_funcs);
    for (Eigen::Index ch = 0; ch < 3; ++ch) {
        span.block(ch * m, ch * k_funcs, m, k_funcs) = block;
    }
    // orthonormal columns keep the finite-difference steps well scaled
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(span);
    return qr.householderQ() * Eigen::MatrixXd::Identity(n, 3 * k_funcs);
}

}  // namespace

SemSolution solve_sem(const SemProblem& problem) {
    problem.validate();
    const OptimizerSettings& s = problem.settings;

    Eigen::VectorXd x = problem.initial_parameters();

    SemSolution sol;
    const auto finish = [&](Eigen::VectorXd final_x) {
        sol.parameters = std::move(final_x);
        sol.theta_star = problem.theta_part(sol.parameters);
        sol.basis_star = problem.basis_for(sol.parameters);
        return sol;
    };

    {
        Eigen::VectorXd residual;
        if (!sem_residual(x, problem, residual)) {
            throw NumericalError("solve_sem: initial parameters destabilize the simulation");
        }
        const double j0 = residual.squaredNorm();
        const Eigen::VectorXd grad = sem_gradient(x, problem);
        if (j0 <= 1e-20 || grad.lpNorm<Eigen::Infinity>() <= 1e-10 * std::max(j0, 1.0)) {
            sol.j_trace.push_back(j0);
            return finish(std::move(x));  // theta0 already optimal
        }
    }

    const bool staged = !problem.basis.is_fourier() &&
                        3 * problem.basis.dimension() >
                            3 * (2 * static_cast<Eigen::Index>(problem.n_m) + 1);
    double discrepancy_level = 0.0;
    if (staged) {
        const Eigen::MatrixXd subspace = harmonic_subspace(problem);
        const LmOutcome stage = lm_minimize(problem, std::move(x), &subspace, s, sol.j_trace);
        x = stage.x;
        sol.iterations = stage.iterations;
        // The full kernel space may refine the carrier-band fit down to the
        // noise-consistent cost; below that level further descent would only
        // trade noise fitting for reparameterizing warps of the angle map.
        discrepancy_level = 1.05 * 3.0 * static_cast<double>(problem.reference.size()) *
                            estimate_noise_variance(problem.d_measured);
    }
    LmOutcome final_stage =
        lm_minimize(problem, std::move(x), nullptr, s, sol.j_trace, discrepancy_level);
    sol.iterations += final_stage.iterations;
    sol.stalled = !staged && final_stage.stalled;
    return finish(std::move(final_stage.x));
}

double estimate_amplitude(const sim::Dataset& data) {
    const Eigen::Matrix3d& c = recon::clarke_matrix();
    double acc = 0.0;
    for (Eigen::Index k = 0; k < data.d.rows(); ++k) {
        const Eigen::Vector3d d = data.d.row(k);
        const double q1 = c.row(0) * d;
        const double q2 = c.row(1) * d;
        acc += q1 * q1 + q2 * q2;
    }
    return std::sqrt(acc / static_cast<double>(data.d.rows()));
}

CalibrationResult calibrate(const sim::Dataset& data, const BlaEstimate& bla,
                            const lti::DiscreteStateSpace& controller,
                            const flux::BasisDescriptor& basis, int n_m,
                            const CalibrationOptions& options) {
    data.validate();
    basis.validate();

    CalibrationResult result;
    result.amplitude_estimate = estimate_amplitude(data);
    const Eigen::VectorXd theta0 = flux::initial_theta(basis, n_m, result.amplitude_estimate);

    const ScaleEstimate scale =
        estimate_scale(bla, data, theta0, basis, n_m, controller, options.scale);
    result.c_hat = scale.c_hat;

    BlaEstimate corrected = bla;
    corrected.model.B /= scale.c_hat;
    for (auto& g : corrected.frf) {
        g /= scale.c_hat;
    }
    corrected.scale_corrected = true;

    SemProblem problem = SemProblem::from_dataset(data, std::move(corrected), controller, basis,
                                                  n_m, theta0, options.optimizer);
    problem.optimize_hyperparameters = options.optimize_hyperparameters && !basis.is_fourier();

    const SemSolution sem = solve_sem(problem);
    result.j_trace = sem.j_trace;
    result.final_cost = sem.j_trace.back();
    result.iterations = sem.iterations;
    result.stalled = sem.stalled;

    result.model.basis = sem.basis_star;
    result.model.theta = sem.theta_star;
    result.model.pole_pairs = n_m;
    result.model.validate();

    result.table = recon::build_lut(result.model, options.lut_size);
    return result;
}

}  // namespace hallcal::ident
