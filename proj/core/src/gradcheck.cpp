#include "stoic/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "stoic/rng.hpp"

namespace stoic {

double gradcheck_rel_error(double analytic, double numeric) {
    double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-12});
    return std::fabs(analytic - numeric) / denom;
}

std::string GradReport::to_string() const {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-32s %6s %14s %14s %12s\n", "parameter", "coord", "analytic",
                  "numeric", "rel_error");
    os << buf;
    for (const Row& r : per_parameter) {
        std::snprintf(buf, sizeof(buf), "%-32s %6lld %14.6e %14.6e %12.3e\n", r.path.c_str(),
                      static_cast<long long>(r.coord), r.analytic, r.numeric, r.rel_error);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "max_rel_error = %.3e\n", max_rel_error);
    os << buf;
    return os.str();
}

namespace {

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

double eval_scalar(const LossFn& f, ParamStore& params) {
    NoGradGuard ng;
    Tensor v = f(params);
    if (!v.defined() || v.numel() != 1) throw ValueError("gradcheck: loss must be scalar");
    double out = v.value(0);
    if (!std::isfinite(out)) throw ValueError("gradcheck: non-finite loss value");
    return out;
}

}  // namespace

GradReport finite_diff_grad_check(const LossFn& f, ParamStore& params, double step,
                                  int max_coords_per_tensor, double zero_floor) {
    if (step <= 0) throw ValueError("gradcheck: step must be positive");

    // Analytic pass.
    params.set_requires_grad(true);
    params.zero_grads();
    Tensor loss = f(params);
    if (!loss.defined() || loss.numel() != 1) throw ValueError("gradcheck: loss must be scalar");
    if (!std::isfinite(loss.value(0))) throw ValueError("gradcheck: non-finite loss value");
    backward(loss);

    GradReport report;
    for (auto& [path, t] : params) {
        int64_t n = t.numel();
        if (n == 0) continue;
        int64_t probes = std::min<int64_t>(n, max_coords_per_tensor);
        // Coordinate subset is derived from the path, independent of map
        // iteration details.
        Rng pick(fnv1a64(path));
        GradReport::Row worst;
        worst.path = path;
        worst.rel_error = -1;
        for (int64_t p = 0; p < probes; ++p) {
            int64_t coord = probes == n ? p : pick.uniform_int(0, n - 1);
            double theta = t.value(coord);
            t.set_value(coord, theta + step);
            double up = eval_scalar(f, params);
            t.set_value(coord, theta - step);
            double down = eval_scalar(f, params);
            t.set_value(coord, theta);
            double numeric = (up - down) / (2.0 * step);
            double analytic = t.grad_value(coord);
            bool unresolvable =
                std::fabs(analytic) <= zero_floor && std::fabs(numeric) <= zero_floor;
            double rel = unresolvable ? 0.0 : gradcheck_rel_error(analytic, numeric);
            if (rel > worst.rel_error) {
                worst.coord = coord;
                worst.analytic = analytic;
                worst.numeric = numeric;
                worst.rel_error = rel;
            }
        }
        report.per_parameter.push_back(worst);
        report.max_rel_error = std::max(report.max_rel_error, worst.rel_error);
    }
    return report;
}

}  // namespace stoic
