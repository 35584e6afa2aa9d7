#include "kneespot/fleet.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace kneespot {

namespace {

constexpr double kConvergenceTol = 1e-8;
constexpr std::size_t kMaxIterations = 500;
constexpr std::size_t kRestarts = 10;
constexpr double kRidgeScale = 1e-6; // of the per-axis data variance

double log_gaussian2(const std::array<double, 2>& mean, const std::array<double, 4>& cov,
                     const std::array<double, 2>& x) {
    const double det = cov[0] * cov[3] - cov[1] * cov[2];
    const double dx = x[0] - mean[0];
    const double dy = x[1] - mean[1];
    // (x-mu)^T cov^{-1} (x-mu) through the adjugate, saving an explicit inverse.
    const double quad = (cov[3] * dx * dx - (cov[1] + cov[2]) * dx * dy + cov[0] * dy * dy) / det;
    return -std::numbers::ln2 - std::log(std::numbers::pi) - 0.5 * std::log(det) - 0.5 * quad;
}

/// log(sum(exp(v))) without overflow; also fills `v` with the normalized
/// responsibilities exp(v - result).
double log_sum_exp_normalize(std::vector<double>& v) {
    const double peak = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(peak)) return peak; // all -inf or a NaN: nothing to normalize
    double sum = 0.0;
    for (double value : v) sum += std::exp(value - peak);
    const double lse = peak + std::log(sum);
    for (double& value : v) value = std::exp(value - lse);
    return lse;
}

struct EmOutcome {
    std::vector<GmmComponent> components;
    std::vector<double> trace;
    bool converged = false;
    bool finite = true;
};

std::array<double, 2> axis_variances(const std::vector<std::array<double, 2>>& points) {
    std::array<double, 2> mean{0.0, 0.0};
    for (const auto& p : points) {
        mean[0] += p[0];
        mean[1] += p[1];
    }
    mean[0] /= double(points.size());
    mean[1] /= double(points.size());
    std::array<double, 2> var{0.0, 0.0};
    for (const auto& p : points) {
        var[0] += (p[0] - mean[0]) * (p[0] - mean[0]);
        var[1] += (p[1] - mean[1]) * (p[1] - mean[1]);
    }
    var[0] /= double(points.size());
    var[1] /= double(points.size());
    return var;
}

std::array<double, 4> data_covariance(const std::vector<std::array<double, 2>>& points) {
    std::array<double, 2> mean{0.0, 0.0};
    for (const auto& p : points) {
        mean[0] += p[0];
        mean[1] += p[1];
    }
    mean[0] /= double(points.size());
    mean[1] /= double(points.size());
    std::array<double, 4> cov{0.0, 0.0, 0.0, 0.0};
    for (const auto& p : points) {
        const double dx = p[0] - mean[0];
        const double dy = p[1] - mean[1];
        cov[0] += dx * dx;
        cov[1] += dx * dy;
        cov[3] += dy * dy;
    }
    cov[0] /= double(points.size());
    cov[1] /= double(points.size());
    cov[2] = cov[1];
    cov[3] /= double(points.size());
    return cov;
}

/// Spread-out initial means: the first is drawn uniformly, each further one
/// with probability proportional to its squared distance from the nearest
/// mean chosen so far.
std::vector<std::array<double, 2>> seed_means(const std::vector<std::array<double, 2>>& points,
                                              std::size_t count, std::mt19937_64& rng) {
    std::vector<std::array<double, 2>> means;
    std::uniform_int_distribution<std::size_t> first(0, points.size() - 1);
    means.push_back(points[first(rng)]);
    std::vector<double> nearest_sq(points.size());
    while (means.size() < count) {
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& m : means) {
                const double dx = points[i][0] - m[0];
                const double dy = points[i][1] - m[1];
                best = std::min(best, dx * dx + dy * dy);
            }
            nearest_sq[i] = best;
            total += best;
        }
        std::size_t chosen;
        if (total > 0.0) {
            std::uniform_real_distribution<double> pick(0.0, total);
            double target = pick(rng);
            chosen = 0;
            while (chosen + 1 < points.size() && target >= nearest_sq[chosen]) {
                target -= nearest_sq[chosen];
                ++chosen;
            }
        } else {
            // All points coincide with a chosen mean; any point will do.
            chosen = first(rng);
        }
        means.push_back(points[chosen]);
    }
    return means;
}

EmOutcome run_em(const std::vector<std::array<double, 2>>& points, std::size_t component_count,
                 std::uint64_t seed, const std::array<double, 2>& ridge) {
    std::mt19937_64 rng(seed);
    const std::size_t n = points.size();

    EmOutcome out;
    const std::array<double, 4> shared_cov = [&] {
        std::array<double, 4> cov = data_covariance(points);
        cov[0] += ridge[0];
        cov[3] += ridge[1];
        return cov;
    }();
    for (const auto& mean : seed_means(points, component_count, rng))
        out.components.push_back({1.0 / double(component_count), mean, shared_cov});

    std::vector<std::vector<double>> resp(n, std::vector<double>(component_count));
    double previous = -std::numeric_limits<double>::infinity();

    for (std::size_t iter = 0; iter < kMaxIterations; ++iter) {
        // E-step: responsibilities and the log-likelihood of the current fit.
        double log_likelihood = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t b = 0; b < component_count; ++b) {
                const GmmComponent& comp = out.components[b];
                resp[i][b] =
                    std::log(comp.weight) + log_gaussian2(comp.mean, comp.covariance, points[i]);
            }
            log_likelihood += log_sum_exp_normalize(resp[i]);
        }
        if (!std::isfinite(log_likelihood)) {
            out.finite = false;
            return out;
        }
        out.trace.push_back(log_likelihood);
        if (log_likelihood - previous < kConvergenceTol) {
            out.converged = true;
            return out;
        }
        previous = log_likelihood;

        // M-step: weighted moments per component.
        double weight_sum = 0.0;
        for (std::size_t b = 0; b < component_count; ++b) {
            double mass = 0.0;
            std::array<double, 2> mean{0.0, 0.0};
            for (std::size_t i = 0; i < n; ++i) {
                mass += resp[i][b];
                mean[0] += resp[i][b] * points[i][0];
                mean[1] += resp[i][b] * points[i][1];
            }
            mean[0] /= mass;
            mean[1] /= mass;
            std::array<double, 4> cov{0.0, 0.0, 0.0, 0.0};
            for (std::size_t i = 0; i < n; ++i) {
                const double dx = points[i][0] - mean[0];
                const double dy = points[i][1] - mean[1];
                cov[0] += resp[i][b] * dx * dx;
                cov[1] += resp[i][b] * dx * dy;
                cov[3] += resp[i][b] * dy * dy;
            }
            cov[0] = cov[0] / mass + ridge[0];
            cov[1] /= mass;
            cov[2] = cov[1];
            cov[3] = cov[3] / mass + ridge[1];
            out.components[b] = {mass / double(n), mean, cov};
            weight_sum += mass / double(n);
        }
        assert(std::abs(weight_sum - 1.0) < 1e-12);
        (void)weight_sum;
    }
    return out; // hit the iteration cap without converging
}

std::vector<double> posterior_from_logs(std::vector<double> logs) {
    const double lse = log_sum_exp_normalize(logs);
    if (!std::isfinite(lse))
        fail(Errc::non_finite_likelihood, "posterior is not finite at this point");
    return logs;
}

void require_fitted(const GmmModel& model) {
    if (!model.fitted()) fail(Errc::model_not_fitted, "mixture model has no components");
}

} // namespace

void FleetPoint::validate() const {
    if (knee_onset <= 0)
        fail(Errc::out_of_range, "battery " + battery_id + ": knee onset must be positive");
    if (eol <= knee_onset)
        fail(Errc::out_of_range, "battery " + battery_id + ": end of life (" +
                                     std::to_string(eol) + ") must come after the knee onset (" +
                                     std::to_string(knee_onset) + ")");
}

LineFit fit_line(const std::vector<FleetPoint>& points) {
    if (points.size() < 2)
        fail(Errc::degenerate_x, "line fit needs at least 2 points, got " +
                                     std::to_string(points.size()));
    for (const FleetPoint& p : points) p.validate();

    double mean_x = 0.0;
    double mean_y = 0.0;
    for (const FleetPoint& p : points) {
        mean_x += double(p.knee_onset);
        mean_y += double(p.eol);
    }
    mean_x /= double(points.size());
    mean_y /= double(points.size());

    double sxx = 0.0;
    double sxy = 0.0;
    for (const FleetPoint& p : points) {
        const double dx = double(p.knee_onset) - mean_x;
        sxx += dx * dx;
        sxy += dx * (double(p.eol) - mean_y);
    }
    if (sxx == 0.0)
        fail(Errc::degenerate_x, "all knee onsets are equal; the regression line is vertical");

    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = mean_y - fit.slope * mean_x;
    fit.residuals.reserve(points.size());
    for (const FleetPoint& p : points)
        fit.residuals.push_back(double(p.eol) - fit.predict(double(p.knee_onset)));
    fit.r_squared = r_squared(points, fit);
    return fit;
}

double r_squared(const std::vector<FleetPoint>& points, const LineFit& fit) {
    if (points.empty()) fail(Errc::zero_variance, "no points to score");
    double mean_y = 0.0;
    for (const FleetPoint& p : points) mean_y += double(p.eol);
    mean_y /= double(points.size());

    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (const FleetPoint& p : points) {
        const double res = double(p.eol) - fit.predict(double(p.knee_onset));
        const double dev = double(p.eol) - mean_y;
        ss_res += res * res;
        ss_tot += dev * dev;
    }
    if (ss_tot == 0.0)
        fail(Errc::zero_variance, "all end-of-life cycles are equal; R-squared is undefined");
    return 1.0 - ss_res / ss_tot;
}

GmmModel fit_gmm(const std::vector<std::array<double, 2>>& points, std::size_t component_count,
                 std::uint64_t seed) {
    if (component_count == 0) fail(Errc::out_of_range, "at least one mixture component required");
    if (points.size() < 3 * component_count)
        fail(Errc::too_few_points, "fitting " + std::to_string(component_count) +
                                       " components needs at least " +
                                       std::to_string(3 * component_count) + " points, got " +
                                       std::to_string(points.size()));

    const std::array<double, 2> variances = axis_variances(points);
    const std::array<double, 2> ridge{kRidgeScale * variances[0], kRidgeScale * variances[1]};

    GmmModel best;
    bool have_best = false;
    for (std::size_t restart = 0; restart < kRestarts; ++restart) {
        EmOutcome outcome = run_em(points, component_count, seed + restart, ridge);
        if (!outcome.finite || outcome.trace.empty()) continue;
        const double final_ll = outcome.trace.back();
        if (!have_best || final_ll > best.log_likelihood) {
            best.components = std::move(outcome.components);
            best.log_likelihood = final_ll;
            best.converged = outcome.converged;
            best.iterations = outcome.trace.size();
            best.log_likelihood_trace = std::move(outcome.trace);
            have_best = true;
        }
    }
    if (!have_best)
        fail(Errc::non_finite_likelihood,
             "every restart produced a non-finite log-likelihood; data may be degenerate");
    return best;
}

std::vector<double> component_posterior(const GmmModel& model, std::array<double, 2> point) {
    require_fitted(model);
    std::vector<double> logs(model.components.size());
    for (std::size_t b = 0; b < model.components.size(); ++b) {
        const GmmComponent& comp = model.components[b];
        logs[b] = std::log(comp.weight) + log_gaussian2(comp.mean, comp.covariance, point);
    }
    return posterior_from_logs(std::move(logs));
}

std::vector<double> knee_marginal_posterior(const GmmModel& model, double knee_onset) {
    require_fitted(model);
    std::vector<double> logs(model.components.size());
    for (std::size_t b = 0; b < model.components.size(); ++b) {
        const GmmComponent& comp = model.components[b];
        const double variance = comp.covariance[0]; // marginal of a Gaussian: drop the other axis
        const double dev = knee_onset - comp.mean[0];
        logs[b] = std::log(comp.weight) - 0.5 * std::log(2.0 * std::numbers::pi * variance) -
                  0.5 * dev * dev / variance;
    }
    return posterior_from_logs(std::move(logs));
}

const char* category_name(Category category) {
    return category == Category::long_range ? "long_range" : "short_range";
}

CategoryMap categorize_components(const GmmModel& model) {
    require_fitted(model);
    if (model.components.size() != 2)
        fail(Errc::out_of_range, "category mapping is defined for exactly 2 components, model has " +
                                     std::to_string(model.components.size()));
    CategoryMap map;
    const double eol0 = model.components[0].mean[1];
    const double eol1 = model.components[1].mean[1];
    map.long_range_component = eol1 > eol0 ? 1 : 0;
    map.short_range_component = 1 - map.long_range_component;
    map.eol_boundary = 0.5 * (eol0 + eol1);
    return map;
}

Category classify_battery(const GmmModel& model, const CategoryMap& map, double knee_onset) {
    const std::vector<double> posterior = knee_marginal_posterior(model, knee_onset);
    std::size_t winner = 0;
    for (std::size_t b = 1; b < posterior.size(); ++b)
        if (posterior[b] > posterior[winner]) winner = b;
    return winner == map.long_range_component ? Category::long_range : Category::short_range;
}

Category classify_by_eol(const CategoryMap& map, double eol) {
    return eol >= map.eol_boundary ? Category::long_range : Category::short_range;
}

} // namespace kneespot
