#include "refnut/beliefs.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace refnut {

HeightSample::HeightSample(std::vector<double> h) : heights(std::move(h)) {
    for (std::size_t i = 0; i < heights.size(); ++i)
        if (!(heights[i] > 0.0)) {
            std::ostringstream os;
            os << "height sample entry " << i << " is not positive (" << heights[i] << ")";
            throw InvalidArgument(os.str());
        }
}

double mean_belief(const HeightSample& s) {
    if (s.m() == 0) throw EmptySample("mean belief needs at least one height");
    double sum = 0.0;
    for (double h : s.heights) sum += h;
    return sum / static_cast<double>(s.m());
}

double sampling_variance_belief(const HeightSample& s) {
    if (s.m() < 2) throw InsufficientSample("sampling variance needs at least two heights");
    double mu = mean_belief(s);
    double ss = 0.0;
    for (double h : s.heights) ss += (h - mu) * (h - mu);
    double m = static_cast<double>(s.m());
    return ss / (m * (m - 1.0));
}

double SigmaRPolicy::resolve(const HeightSample& prior) const {
    if (kind == Kind::Fixed) return value;
    return std::max(floor, std::sqrt(sampling_variance_belief(prior)));
}

void SigmaRPolicy::validate() const {
    if (kind == Kind::Fixed && !(value > 0.0)) throw InvalidArgument("fixed reference s.d. must be positive");
    if (kind == Kind::SamplingError && !(floor > 0.0)) throw InvalidArgument("reference s.d. floor must be positive");
}

std::string SigmaRPolicy::describe() const {
    std::ostringstream os;
    if (kind == Kind::Fixed) os << "fixed:" << value;
    else os << "sampling_error:floor=" << floor;
    return os.str();
}

ReferenceBelief belief_from_sample(const HeightSample& prior, const SigmaRPolicy& policy) {
    return ReferenceBelief(mean_belief(prior), policy.resolve(prior));
}

double TrendReference::predict(double year, int male, bool atole) const {
    double t = year - year_origin;
    return phi0 + phi1 * t + (atole ? phi2 * std::max(t, 0.0) : 0.0) + phi3 * male;
}

TrendReference trend_reference_fit(std::span<const TrendObservation> obs, double year_origin) {
    const Eigen::Index n = static_cast<Eigen::Index>(obs.size());
    Eigen::MatrixXd X(n, 4);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& o = obs[static_cast<std::size_t>(i)];
        double t = o.year - year_origin;
        X(i, 0) = 1.0;
        X(i, 1) = t;
        X(i, 2) = o.atole ? std::max(t, 0.0) : 0.0;
        X(i, 3) = o.male;
        y(i) = o.height;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (n < 4 || qr.rank() < 4)
        throw RankDeficient("trend regression design is rank deficient (need two cohort years per arm and both genders)");
    Eigen::VectorXd b = qr.solve(y);
    TrendReference tr;
    tr.phi0 = b(0);
    tr.phi1 = b(1);
    tr.phi2 = b(2);
    tr.phi3 = b(3);
    tr.year_origin = year_origin;
    return tr;
}

CohortOutcome advance_distribution(std::span<const HouseholdState> population,
                                   const HeightSample& prior, const Theta& th, const GridConfig& cfg,
                                   const SigmaRPolicy& policy, std::span<const double> eps_std_normal) {
    if (population.empty()) throw EmptySample("law of motion needs a non-empty population");
    if (eps_std_normal.size() < population.size())
        throw InvalidArgument("one productivity draw per household is required");
    ReferenceBelief belief = belief_from_sample(prior, policy);

    std::vector<HouseholdState> states(population.begin(), population.end());
    for (std::size_t i = 0; i < states.size(); ++i) {
        states[i].belief = belief;
        states[i].eps = th.sigma_eps * eps_std_normal[i];
    }
    std::vector<Solution> sols = solve_batch(states, th, cfg);

    CohortOutcome out;
    out.belief = belief;
    out.intake.resize(states.size());
    std::vector<double> h(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        out.intake[i] = sols[i].n_star;
        h[i] = height24(th, states[i].covariates, states[i].eps, sols[i].n_star);
    }
    out.heights = HeightSample(std::move(h));
    return out;
}

}  // namespace refnut
