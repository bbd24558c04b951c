#include "nara/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nara {

GradCheckReport finite_diff_check(const std::function<Tensor()>& loss, std::vector<NamedParam> params,
                                  GradCheckOptions options) {
    if (!(options.h > 0.0)) throw std::invalid_argument("finite_diff_check: step h must be positive");

    auto value = [&] {
        NoGradGuard guard;
        return loss().item();
    };
    const double base1 = value();
    const double base2 = value();
    if (base1 != base2) {
        throw std::runtime_error("finite_diff_check: loss is not deterministic (" + std::to_string(base1) +
                                 " vs " + std::to_string(base2) + ")");
    }

    for (auto& p : params) p.tensor.zero_grad();
    backward(loss());

    GradCheckReport report;
    for (auto& p : params) {
        const std::vector<double> analytic = p.tensor.grad();
        GradCheckEntry entry{p.name, analytic.size(), 0.0, 0.0};
        auto data = p.tensor.data_mut();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + options.h;
            const double up = value();
            data[i] = saved - options.h;
            const double down = value();
            data[i] = saved;
            const double numeric = (up - down) / (2.0 * options.h);
            const double abs_err = std::abs(analytic[i] - numeric);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), options.rel_floor});
            entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
            entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
        }
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.elements += entry.count;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace nara
