#include "noiseavg/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "noiseavg/error.hpp"

namespace noiseavg {

void EvalPoint::validate() const {
    if (x.shape != delta.shape)
        throw ValidationError("eval point delta shape " + delta.shape_str() + " does not match x " +
                              x.shape_str());
    onehot_index(y_onehot);
    if (noises.empty() || noises.size() != weights.size())
        throw ValidationError("eval point needs matching, non-empty noises and weights");
    for (const Tensor& n : noises)
        if (n.shape != x.shape)
            throw ValidationError("eval point noise shape mismatch: " + n.shape_str());
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw ValidationError("eval point weights must be >= 0");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw ValidationError("eval point weights must sum to 1 within 1e-12");
}

double empirical_f(const Ensemble& ensemble, const Tensor& x_adv, const Tensor& y_onehot) {
    ensemble.validate();
    double sum = 0.0;
    for (const MlpModel& m : ensemble.models) sum += model_loss(m, x_adv, y_onehot);
    return sum / double(ensemble.size());
}

double error_hat(std::size_t source_index, const Ensemble& ensemble, const Tensor& x_adv,
                 const Tensor& y_onehot) {
    if (source_index >= ensemble.size())
        throw ValidationError("source index out of range");
    return model_loss(ensemble.models[source_index], x_adv, y_onehot) -
           empirical_f(ensemble, x_adv, y_onehot);
}

double error_m(std::size_t source_index, const Ensemble& ensemble, const EvalPoint& point,
               std::size_t m) {
    point.validate();
    if (source_index >= ensemble.size())
        throw ValidationError("source index out of range");
    if (m >= point.num_samples())
        throw ValidationError("noise sample index out of range");
    const Tensor x_adv = point.adversarial();
    const Tensor noised = add(x_adv, point.noises[m]);
    return model_loss(ensemble.models[source_index], noised, point.y_onehot) -
           empirical_f(ensemble, x_adv, point.y_onehot);
}

ErrorStats mse_stats(const Ensemble& ensemble, const EvalPoint& point, MeanEstimator estimator) {
    ensemble.validate();
    point.validate();
    const std::size_t k_members = ensemble.size();
    const std::size_t m_samples = point.num_samples();
    const Tensor x_adv = point.adversarial();

    std::vector<double> loss_at_adv(k_members);
    for (std::size_t i = 0; i < k_members; ++i)
        loss_at_adv[i] = model_loss(ensemble.models[i], x_adv, point.y_onehot);
    double loss_sum = 0.0;
    for (double v : loss_at_adv) loss_sum += v;

    ErrorStats stats;
    stats.weights = point.weights;
    stats.source_errors.resize(k_members);
    stats.sample_errors.assign(k_members, std::vector<double>(m_samples, 0.0));

    for (std::size_t i = 0; i < k_members; ++i) {
        const double f_ref = estimator == MeanEstimator::all_members
                                 ? loss_sum / double(k_members)
                                 : (loss_sum - loss_at_adv[i]) / double(k_members - 1);
        stats.source_errors[i] = loss_at_adv[i] - f_ref;
        for (std::size_t m = 0; m < m_samples; ++m) {
            const Tensor noised = add(x_adv, point.noises[m]);
            stats.sample_errors[i][m] =
                model_loss(ensemble.models[i], noised, point.y_onehot) - f_ref;
        }
    }

    for (std::size_t i = 0; i < k_members; ++i)
        stats.source_mse += stats.source_errors[i] * stats.source_errors[i];
    stats.source_mse /= double(k_members);

    for (std::size_t i = 0; i < k_members; ++i) {
        double combined = 0.0;
        for (std::size_t m = 0; m < m_samples; ++m)
            combined += point.weights[m] * stats.sample_errors[i][m];
        stats.averaged_mse += combined * combined;
    }
    stats.averaged_mse /= double(k_members);

    stats.sample_second_moments.assign(m_samples, 0.0);
    stats.cross_moments.assign(m_samples, std::vector<double>(m_samples, 0.0));
    for (std::size_t l = 0; l < m_samples; ++l) {
        for (std::size_t k = l; k < m_samples; ++k) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k_members; ++i)
                acc += stats.sample_errors[i][l] * stats.sample_errors[i][k];
            acc /= double(k_members);
            stats.cross_moments[l][k] = acc;
            stats.cross_moments[k][l] = acc;
        }
        stats.sample_second_moments[l] = stats.cross_moments[l][l];
    }

    stats.rho_defined = stats.source_mse > 0.0;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    stats.rho.assign(m_samples, std::vector<double>(m_samples, nan));
    if (stats.rho_defined)
        for (std::size_t l = 0; l < m_samples; ++l)
            for (std::size_t k = 0; k < m_samples; ++k)
                stats.rho[l][k] = stats.cross_moments[l][k] / stats.source_mse;

    if (stats.source_mse == 0.0) {
        const bool all_zero = std::all_of(stats.sample_second_moments.begin(),
                                          stats.sample_second_moments.end(),
                                          [](double v) { return v == 0.0; });
        stats.assumption_gap = all_zero ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
        double gap = 0.0;
        for (double mom : stats.sample_second_moments)
            gap = std::max(gap, std::abs(mom - stats.source_mse) / stats.source_mse);
        stats.assumption_gap = gap;
    }
    return stats;
}

CauchySchwarzReport verify_cauchy_schwarz(const std::vector<std::vector<double>>& sample_errors) {
    if (sample_errors.empty() || sample_errors.front().empty())
        throw ValidationError("Cauchy-Schwarz check needs a non-empty error matrix");
    const std::size_t k_members = sample_errors.size();
    const std::size_t m_samples = sample_errors.front().size();
    for (const auto& row : sample_errors)
        if (row.size() != m_samples)
            throw ValidationError("Cauchy-Schwarz check needs a rectangular error matrix");

    std::vector<std::vector<double>> moments(m_samples, std::vector<double>(m_samples, 0.0));
    for (std::size_t l = 0; l < m_samples; ++l)
        for (std::size_t k = l; k < m_samples; ++k) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k_members; ++i) acc += sample_errors[i][l] * sample_errors[i][k];
            acc /= double(k_members);
            moments[l][k] = moments[k][l] = acc;
        }

    CauchySchwarzReport report;
    report.worst_violation = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < m_samples; ++l)
        for (std::size_t k = 0; k < m_samples; ++k) {
            const double bound = std::sqrt(moments[l][l] * moments[k][k]);
            const double violation = std::abs(moments[l][k]) - bound;
            if (violation > report.worst_violation) {
                report.worst_violation = violation;
                report.worst_l = l;
                report.worst_k = k;
            }
        }
    report.ok = report.worst_violation <= 1e-9;
    return report;
}

MseInequalityReport verify_mse_inequality(const ErrorStats& stats) {
    if (stats.weights.size() != stats.num_samples())
        throw ValidationError("error stats carry no mixture weights");
    MseInequalityReport report;
    report.margin = stats.source_mse - stats.averaged_mse;
    report.holds = report.margin >= -1e-9 * std::max(1.0, stats.source_mse);

    // averaged_mse re-expanded from the moment matrix; exact up to rounding.
    double expansion = 0.0;
    const std::size_t m_samples = stats.num_samples();
    for (std::size_t m = 0; m < m_samples; ++m)
        expansion += stats.weights[m] * stats.weights[m] * stats.sample_second_moments[m];
    for (std::size_t l = 0; l < m_samples; ++l)
        for (std::size_t k = l + 1; k < m_samples; ++k)
            expansion += 2.0 * stats.weights[l] * stats.weights[k] * stats.cross_moments[l][k];

    double scale = std::max(stats.averaged_mse, stats.source_mse);
    for (double mom : stats.sample_second_moments) scale = std::max(scale, mom);
    const double diff = std::abs(stats.averaged_mse - expansion);
    report.expansion_rel_err = scale > 0.0 ? diff / scale : (diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    report.expansion_ok = report.expansion_rel_err <= 1e-9;
    return report;
}

double assumption_check(const Ensemble& ensemble, const EvalPoint& point) {
    return mse_stats(ensemble, point).assumption_gap;
}

double transfer_rate(const std::vector<MlpModel>& targets, const std::vector<Tensor>& originals,
                     const std::vector<Tensor>& adversarials, const std::vector<int>& labels) {
    if (targets.empty()) throw ValidationError("transfer_rate needs at least one target");
    if (originals.size() != adversarials.size() || originals.size() != labels.size())
        throw ValidationError("transfer_rate needs equal-length originals/adversarials/labels");
    if (originals.empty()) throw ValidationError("transfer_rate needs at least one example");

    double rate_sum = 0.0;
    std::size_t scored_targets = 0;
    for (const MlpModel& target : targets) {
        std::size_t evaluated = 0;
        std::size_t fooled = 0;
        for (std::size_t i = 0; i < originals.size(); ++i) {
            if (predict(target, originals[i]) != labels[i]) continue; // per-target filter
            ++evaluated;
            if (predict(target, adversarials[i]) != labels[i]) ++fooled;
        }
        if (evaluated == 0) continue;
        rate_sum += double(fooled) / double(evaluated);
        ++scored_targets;
    }
    if (scored_targets == 0)
        throw ValidationError("transfer_rate: no target classifies any original correctly");
    return rate_sum / double(scored_targets);
}

} // namespace noiseavg
