#include "cpdewarp/tps.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "cpdewarp/kernels.hpp"

namespace cpd {

namespace {

constexpr double kDuplicateDistance = 1e-9;
constexpr double kCollinearRatio = 1e-12;
constexpr double kMinReciprocalCondition = 1e-15;
constexpr double kMaxRelativeResidual = 1e-8;

TpsModel::Frame bounding_frame(std::span<const Point2> pts) {
    double min_x = std::numeric_limits<double>::infinity();
    double min_y = min_x;
    double max_x = -min_x;
    double max_y = -min_x;
    for (const auto& p : pts) {
        min_x = std::min(min_x, p.x);
        min_y = std::min(min_y, p.y);
        max_x = std::max(max_x, p.x);
        max_y = std::max(max_y, p.y);
    }
    TpsModel::Frame f;
    f.offset = {min_x, min_y};
    const double extent = std::max(max_x - min_x, max_y - min_y);
    f.scale = extent > 0.0 ? extent : 1.0;
    return f;
}

[[noreturn]] void degenerate(const std::string& why) {
    throw Error(ErrorCode::DegenerateConfiguration, "thin-plate spline fit failed: " + why);
}

void check_collinear(std::span<const Point2> unit) {
    double mx = 0.0, my = 0.0;
    for (const auto& p : unit) {
        mx += p.x;
        my += p.y;
    }
    const double n = static_cast<double>(unit.size());
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (const auto& p : unit) {
        sxx += (p.x - mx) * (p.x - mx);
        syy += (p.y - my) * (p.y - my);
        sxy += (p.x - mx) * (p.y - my);
    }
    // eigenvalues of the 2x2 scatter matrix
    const double tr = sxx + syy;
    const double det = sxx * syy - sxy * sxy;
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    const double hi = tr / 2.0 + disc;
    const double lo = tr / 2.0 - disc;
    if (!(hi > 0.0) || lo <= kCollinearRatio * hi) degenerate("sites are collinear");
}

}  // namespace

double tps_kernel(double r) { return r > 0.0 ? r * r * std::log(r) : 0.0; }

Point2 TpsModel::evaluate(Point2 p) const { return kernels::tps_at(*this, p.x, p.y); }

double TpsModel::side_condition_residual() const {
    double sw_x = 0.0, sw_y = 0.0, swx_x = 0.0, swx_y = 0.0, swy_x = 0.0, swy_y = 0.0;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
        const Point2& w = weights_[k];
        const Point2& s = unit_sites_[k];
        sw_x += w.x;
        sw_y += w.y;
        swx_x += w.x * s.x;
        swx_y += w.y * s.x;
        swy_x += w.x * s.y;
        swy_y += w.y * s.y;
    }
    return std::max({std::abs(sw_x), std::abs(sw_y), std::abs(swx_x), std::abs(swx_y),
                     std::abs(swy_x), std::abs(swy_y)});
}

TpsModel tps_fit(std::span<const Point2> sites, std::span<const Point2> targets, double lambda) {
    if (sites.size() != targets.size()) {
        throw Error(ErrorCode::ShapeMismatch, "sites and targets differ in length");
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw Error(ErrorCode::InvalidArgument, "regularization must be finite and >= 0");
    }
    const std::size_t n = sites.size();
    if (n < 3) degenerate("need at least 3 sites, got " + std::to_string(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (!sites[i].finite() || !targets[i].finite()) {
            throw Error(ErrorCode::InvalidArgument, "non-finite site or target");
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (norm(sites[i] - sites[j]) <= kDuplicateDistance) {
                degenerate("duplicate sites " + std::to_string(i) + " and " + std::to_string(j));
            }
        }
    }

    TpsModel model;
    model.lambda_ = lambda;
    model.sites_.assign(sites.begin(), sites.end());
    model.site_frame_ = bounding_frame(sites);
    model.target_frame_ = bounding_frame(targets);
    model.unit_sites_.reserve(n);
    for (const auto& s : sites) model.unit_sites_.push_back(model.site_frame_.to_unit(s));
    check_collinear(model.unit_sites_);

    const Eigen::Index m = static_cast<Eigen::Index>(n) + 3;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const Point2& si = model.unit_sites_[i];
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            const double u = tps_kernel(norm(si - model.unit_sites_[j]));
            a(ii, jj) = u;
            a(jj, ii) = u;
        }
        a(ii, ii) = lambda;
        a(ii, m - 3) = 1.0;
        a(ii, m - 2) = si.x;
        a(ii, m - 1) = si.y;
        a(m - 3, ii) = 1.0;
        a(m - 2, ii) = si.x;
        a(m - 1, ii) = si.y;
        const Point2 t = model.target_frame_.to_unit(targets[i]);
        b(ii, 0) = t.x;
        b(ii, 1) = t.y;
    }

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    if (!(lu.rcond() > kMinReciprocalCondition)) degenerate("ill-conditioned system");
    const Eigen::MatrixXd x = lu.solve(b);
    const double residual = (a * x - b).norm() / std::max(1.0, b.norm());
    if (!x.allFinite() || residual > kMaxRelativeResidual) degenerate("solve did not converge");

    model.weights_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        model.weights_[i] = {x(ii, 0), x(ii, 1)};
    }
    for (int out = 0; out < 2; ++out) {
        for (int k = 0; k < 3; ++k) model.affine_[out][k] = x(m - 3 + k, out);
    }
    return model;
}

BackwardMap tps_evaluate(const TpsModel& model, int width, int height, Execution exec) {
    if (width < 1 || height < 1) {
        throw Error(ErrorCode::InvalidArgument, "output size must be at least 1x1");
    }
    BackwardMap out(width, height);
    if (exec == Execution::Serial) {
        kernels::serial::tps_evaluate(model, out);
    } else {
        kernels::omp::tps_evaluate(model, out);
    }
    return out;
}

}  // namespace cpd
