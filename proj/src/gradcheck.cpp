#include "symcomp/gradcheck.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace symcomp {

std::string FdReport::summary() const {
    std::ostringstream os;
    os << (pass ? "PASS" : "FAIL") << " max_rel_err=" << max_rel_err << " tol=" << tol
       << " eps=" << eps << " kinks=" << kink_count;
    for (const auto& e : entries) {
        os << "\n  " << e.param << " max_rel_err=" << e.max_rel_err;
        if (e.worst_index >= 0)
            os << " worst[" << e.worst_index << "] analytic=" << e.analytic_at_worst
               << " numeric=" << e.numeric_at_worst;
        if (e.kink_count > 0) os << " kinks=" << e.kink_count;
    }
    return os.str();
}

FdReport finite_diff_check(const LossFn& loss_fn, ParamStore& params, double eps, double tol,
                           double rel_floor) {
    if (eps <= 0.0 || tol <= 0.0) throw ConfigError("finite_diff_check: eps and tol must be > 0");
    FdReport report;
    report.eps = eps;
    report.tol = tol;

    // snapshot buffers (BN running stats, optimizer state) to undo drift
    std::map<std::string, Tensor> buffer_backup;
    for (const auto& name : params.names())
        if (!params.is_param(name)) buffer_backup[name] = params.value(name);

    params.zero_grads();
    double f0 = loss_fn(true);
    if (!std::isfinite(f0)) throw NumericError("finite_diff_check: loss is non-finite at base point");
    std::map<std::string, Tensor> analytic;
    for (const auto& name : params.param_names()) analytic[name] = params.grad(name);

    for (const auto& name : params.param_names()) {
        FdEntry entry;
        entry.param = name;
        Tensor& p = params.value(name);
        const Tensor& g = analytic[name];
        for (int64_t i = 0; i < p.numel(); ++i) {
            double saved = p.at(i);
            p.at(i) = saved + eps;
            double fp = loss_fn(false);
            p.at(i) = saved - eps;
            double fm = loss_fn(false);
            p.at(i) = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericError("finite_diff_check: non-finite loss when perturbing " + name +
                                   "[" + std::to_string(i) + "]");
            double fwd = (fp - f0) / eps;
            double bwd = (f0 - fm) / eps;
            double kink_tol = 1e-2 * std::max({1.0, std::abs(fwd), std::abs(bwd)});
            if (std::abs(fwd - bwd) > kink_tol) {
                ++entry.kink_count;
                continue;
            }
            double numeric = (fp - fm) / (2.0 * eps);
            double a = g.at(i);
            double rel = std::abs(a - numeric) / std::max({rel_floor, std::abs(a), std::abs(numeric)});
            if (rel > entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_index = i;
                entry.analytic_at_worst = a;
                entry.numeric_at_worst = numeric;
            }
        }
        report.kink_count += entry.kink_count;
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    report.pass = report.max_rel_err <= tol;

    for (auto& [name, t] : buffer_backup) params.value(name) = t;
    return report;
}

}  // namespace symcomp
