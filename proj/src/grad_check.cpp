#include "mawsd/grad_check.hpp"

#include "mawsd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mawsd {

double relative_error(double analytic, double numeric, double floor)
{
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const std::function<Tensor()>& loss, const std::string& name)
{
    const double v = loss().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss while perturbing '" + name + "'");
    return v;
}

std::vector<Index> pick_coords(Index size, Index max_coords, std::mt19937_64& rng)
{
    std::vector<Index> all(static_cast<std::size_t>(size));
    std::iota(all.begin(), all.end(), Index{0});
    if (max_coords <= 0 || size <= max_coords) return all;
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(static_cast<std::size_t>(max_coords));
    std::sort(all.begin(), all.end());
    return all;
}

} // namespace

GradReport grad_check(const std::function<Tensor()>& loss, const NamedTensors& params,
                      const GradCheckOptions& options)
{
    for (auto [name, t] : params) t.zero_grad();
    Tensor l = loss();
    if (!std::isfinite(l.item())) throw NumericError("grad_check: non-finite loss at the unperturbed point");
    l.backward();

    std::vector<Array> analytic;
    analytic.reserve(params.size());
    for (const auto& [name, t] : params) {
        Array g = t.grad();
        if (!g.allFinite()) throw NumericError("grad_check: non-finite analytic gradient for '" + name + "'");
        analytic.push_back(std::move(g));
    }

    GradReport report;
    report.tolerance = options.tolerance;
    std::mt19937_64 rng(options.seed);
    for (std::size_t p = 0; p < params.size(); ++p) {
        const std::string& name = params[p].first;
        Tensor t = params[p].second;
        ParamGradError entry{name, 0.0, 0};
        for (Index i : pick_coords(t.size(), options.max_coords, rng)) {
            const double orig = t.value()(i);
            t.mutable_value()(i) = orig + options.epsilon;
            const double up = evaluate(loss, name);
            t.mutable_value()(i) = orig - options.epsilon;
            const double down = evaluate(loss, name);
            t.mutable_value()(i) = orig;
            const double numeric = (up - down) / (2.0 * options.epsilon);
            entry.max_rel_error =
                std::max(entry.max_rel_error, relative_error(analytic[p](i), numeric, options.floor));
            ++entry.coords_checked;
        }
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.params.push_back(std::move(entry));
    }
    for (auto [name, t] : params) t.zero_grad();
    report.passed = report.max_rel_error < options.tolerance;
    return report;
}

} // namespace mawsd
