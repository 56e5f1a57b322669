#include "qtitle/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace qtitle {

namespace {

void check_eps(double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3))
        throw std::invalid_argument(fmt::format("gradient check step {} outside [1e-7, 1e-3]", eps));
}

double finite_or_throw(double v) {
    if (!std::isfinite(v)) throw NumericError("gradient check: objective is not finite");
    return v;
}

template <typename Label>
void record(GradCheckResult& out, double analytic, double numeric, Label label) {
    const double err = relative_error(analytic, numeric);
    if (err > out.max_relative_error || out.coordinates == 0) {
        out.max_relative_error = err;
        out.worst = label();
        out.worst_analytic = analytic;
        out.worst_numeric = numeric;
    }
    out.max_absolute_error = std::max(out.max_absolute_error, std::abs(analytic - numeric));
    ++out.coordinates;
}

}  // namespace

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradients(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> x, std::span<const double> analytic,
                                double eps) {
    check_eps(eps);
    if (analytic.size() != x.size())
        throw ShapeError(fmt::format("gradient check: {} inputs but {} analytic entries", x.size(),
                                     analytic.size()));
    finite_or_throw(f(x));
    std::vector<double> probe(x.begin(), x.end());
    GradCheckResult out;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double keep = probe[i];
        probe[i] = keep + eps;
        const double up = finite_or_throw(f(probe));
        probe[i] = keep - eps;
        const double down = finite_or_throw(f(probe));
        probe[i] = keep;
        record(out, analytic[i], (up - down) / (2.0 * eps), [&] { return fmt::format("x[{}]", i); });
    }
    return out;
}

GradCheckResult check_gradients(const std::function<double()>& loss,
                                std::span<Parameter* const> params, double eps) {
    check_eps(eps);
    finite_or_throw(loss());
    GradCheckResult out;
    for (Parameter* p : params) {
        auto& values = p->value.values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double keep = values[i];
            values[i] = keep + eps;
            const double up = finite_or_throw(loss());
            values[i] = keep - eps;
            const double down = finite_or_throw(loss());
            values[i] = keep;
            record(out, p->grad[i], (up - down) / (2.0 * eps), [&] { return fmt::format("{}[{}]", p->name, i); });
        }
    }
    return out;
}

}  // namespace qtitle
