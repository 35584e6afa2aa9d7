#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kneespot/error.hpp"
#include "kneespot/types.hpp"

namespace kneespot {

/// One battery's life summary: where its degradation knee sat and when it
/// reached end of life.
struct FleetPoint {
    std::string battery_id;
    CycleNumber knee_onset = 0;
    CycleNumber eol = 0;

    void validate() const; // 0 < knee_onset < eol
};

/// Ordinary least squares of EOL on knee onset.
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<double> residuals; // eol - predicted, in input order
    double r_squared = 0.0;

    double predict(double knee_onset) const { return intercept + slope * knee_onset; }
};

/// Least-squares line through the fleet points. Needs at least two points and
/// some spread on the knee axis.
LineFit fit_line(const std::vector<FleetPoint>& points);

/// Coefficient of determination of `fit` on `points`: 1 - SS_res / SS_tot.
/// The fit need not be the least-squares one — a deliberately constant
/// predictor scores exactly 0.
double r_squared(const std::vector<FleetPoint>& points, const LineFit& fit);

/// One Gaussian of the mixture, over (knee onset, EOL) points.
struct GmmComponent {
    double weight = 0.0;
    std::array<double, 2> mean{};
    std::array<double, 4> covariance{}; // row-major 2x2, symmetric
};

struct GmmModel {
    std::vector<GmmComponent> components;
    double log_likelihood = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    // Log-likelihood after each EM iteration of the winning restart;
    // non-decreasing up to round-off.
    std::vector<double> log_likelihood_trace;

    bool fitted() const { return !components.empty(); }
};

/// Fits a Gaussian mixture by expectation-maximization: 10 restarts seeded
/// from `seed` with a spread-out initial center choice, each run until the
/// log-likelihood improves by less than 1e-8 or 500 iterations; the restart
/// with the best final log-likelihood wins (earlier restart on ties).
/// Covariances carry a small diagonal floor tied to the per-axis data
/// variance, keeping them invertible.
GmmModel fit_gmm(const std::vector<std::array<double, 2>>& points, std::size_t component_count,
                 std::uint64_t seed);

/// Responsibilities of each component for a full (knee, EOL) observation.
std::vector<double> component_posterior(const GmmModel& model, std::array<double, 2> point);

/// Responsibilities from the knee-onset coordinate alone, integrating the
/// unknown EOL out of each component.
std::vector<double> knee_marginal_posterior(const GmmModel& model, double knee_onset);

enum class Category { long_range, short_range };

const char* category_name(Category category);

/// Which mixture component plays which role, plus the EOL-axis boundary
/// between them (midpoint of the component EOL means).
struct CategoryMap {
    std::size_t long_range_component = 0;
    std::size_t short_range_component = 0;
    double eol_boundary = 0.0;
};

/// Maps a fitted two-component model onto categories: the component whose
/// mean EOL is larger is the long-range one.
CategoryMap categorize_components(const GmmModel& model);

/// Online classification: category of the component most responsible for the
/// knee onset under the knee-axis marginals. Ties go to the lower-index
/// component.
Category classify_battery(const GmmModel& model, const CategoryMap& map, double knee_onset);

/// Offline classification of a battery whose EOL is already known: threshold
/// on the map's EOL boundary (at or above the boundary is long-range).
Category classify_by_eol(const CategoryMap& map, double eol);

} // namespace kneespot
