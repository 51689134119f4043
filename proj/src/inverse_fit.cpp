#include "hmdcap/inverse_fit.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "hmdcap/error.hpp"
#include "hmdcap/json_io.hpp"

namespace hmdcap {

void FitConfig::validate() const
{
    if (max_iterations < 1 || !(damping > 0.0) || !(w_r > 0.0) || !(tolerance > 0.0) || pose_iterations < 1) {
        throw std::invalid_argument("FitConfig: all settings must be positive");
    }
}

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& w)
{
    Eigen::Matrix3d m;
    m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
    return m;
}

Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& w)
{
    const double angle = w.norm();
    if (angle == 0.0) {
        return Eigen::Matrix3d::Identity();
    }
    return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

// Re-orthonormalise to keep round-off from accumulating in the rotation.
Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m)
{
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
        d(2, 2) = -1.0; // flip the direction of the smallest singular value
    }
    return svd.matrixU() * d * svd.matrixV().transpose();
}

double pose_cost(std::span<const Eigen::Vector3d> v, std::span<const Eigen::Vector2d> p, std::span<const double> w,
                 const Eigen::Matrix3d& r, const Eigen::Vector2d& t, double s)
{
    double cost = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        cost += w[i] * (s * (r * v[i]).head<2>() + t - p[i]).squaredNorm();
    }
    return cost;
}

// Levenberg-Marquardt on (rotation increment, translation, log-scale); only improving steps are taken.
Pose refine_pose(std::span<const Eigen::Vector3d> v, std::span<const Eigen::Vector2d> p, std::span<const double> w,
                 const Pose& start, int iterations, double damping)
{
    Eigen::Matrix3d r = start.rotation();
    Eigen::Vector2d t = start.translation();
    double s = start.scale();
    double cost = pose_cost(v, p, w, r, t, s);
    double lambda = damping;
    for (int it = 0; it < iterations && cost > 0.0; ++it) {
        Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const Eigen::Vector3d rv = r * v[i];
            const Eigen::Vector2d res = s * rv.head<2>() + t - p[i];
            Eigen::Matrix<double, 2, 6> j;
            j.leftCols<3>() = -s * skew(rv).topRows<2>();
            j.block<2, 2>(0, 3).setIdentity();
            j.col(5) = s * rv.head<2>();
            h += w[i] * j.transpose() * j;
            g += w[i] * j.transpose() * res;
        }
        bool improved = false;
        for (int attempt = 0; attempt < 10; ++attempt) {
            Eigen::Matrix<double, 6, 6> hd = h;
            hd.diagonal() += lambda * (h.diagonal().array() + 1e-12).matrix();
            const Eigen::Matrix<double, 6, 1> step = -hd.ldlt().solve(g);
            if (!step.allFinite()) {
                break;
            }
            const Eigen::Matrix3d r_new = nearest_rotation(rotation_exp(step.head<3>()) * r);
            const Eigen::Vector2d t_new = t + step.segment<2>(3);
            const double s_new = s * std::exp(step(5));
            const double c = pose_cost(v, p, w, r_new, t_new, s_new);
            if (c < cost) {
                r = r_new;
                t = t_new;
                s = s_new;
                cost = c;
                lambda = std::max(lambda / 10.0, 1e-15);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!improved) {
            break;
        }
    }
    return Pose(r, t, s);
}

Pose fit_pose_weighted(std::span<const Eigen::Vector3d> points3d, std::span<const Eigen::Vector2d> points2d,
                       std::span<const double> weights)
{
    const std::size_t n = points3d.size();
    if (n != points2d.size() || n != weights.size()) {
        throw DimensionError("fit_pose: correspondence lists differ in length");
    }
    if (n < 4) {
        throw std::invalid_argument("fit_pose: at least 4 correspondences required");
    }
    double wsum = 0.0;
    Eigen::Vector3d vm = Eigen::Vector3d::Zero();
    Eigen::Vector2d pm = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        wsum += weights[i];
        vm += weights[i] * points3d[i];
        pm += weights[i] * points2d[i];
    }
    if (!(wsum > 0.0)) {
        throw std::invalid_argument("fit_pose: weights must not all be zero");
    }
    vm /= wsum;
    pm /= wsum;
    Eigen::MatrixXd v(n, 3);
    Eigen::MatrixXd p(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const double sw = std::sqrt(weights[i]);
        v.row(static_cast<Eigen::Index>(i)) = sw * (points3d[i] - vm).transpose();
        p.row(static_cast<Eigen::Index>(i)) = sw * (points2d[i] - pm).transpose();
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> sv(v);
    const Eigen::JacobiSVD<Eigen::MatrixXd> sp(p);
    const double tol3 = 1e-9 * std::max(sv.singularValues()(0), 1e-300);
    const double tol2 = 1e-9 * std::max(sp.singularValues()(0), 1e-300);
    const int rank3 = static_cast<int>((sv.singularValues().array() > tol3).count());
    const int rank2 = static_cast<int>((sp.singularValues().array() > tol2).count());
    if (rank3 < 2 || rank2 < 2) {
        throw NumericalError("fit_pose: degenerate configuration, 3D rank " + std::to_string(rank3) +
                             ", 2D rank " + std::to_string(rank2) + " (need 2)");
    }

    // Affine camera p = M v (centred); minimum-norm solution when the 3D points are coplanar.
    const Eigen::JacobiSVD<Eigen::MatrixXd> solver(v, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::Matrix<double, 3, 2> mt = solver.solve(p);
    const Eigen::Matrix<double, 2, 3> m = mt.transpose();
    const Eigen::JacobiSVD<Eigen::Matrix<double, 2, 3>> msvd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double s = 0.5 * (msvd.singularValues()(0) + msvd.singularValues()(1));
    if (!(s > 0.0)) {
        throw NumericalError("fit_pose: zero scale");
    }
    const Eigen::Matrix<double, 2, 3> rows =
        msvd.matrixU() * Eigen::Matrix<double, 2, 3>::Identity() * msvd.matrixV().transpose();
    Eigen::Matrix3d r;
    r.row(0) = rows.row(0);
    r.row(1) = rows.row(1);
    r.row(2) = rows.row(0).cross(rows.row(1));
    r = nearest_rotation(r);
    const Eigen::Vector2d t = pm - s * (r * vm).head<2>();
    return refine_pose(points3d, points2d, weights, Pose(r, t, s), 50, 1e-6);
}

struct FrameData {
    std::vector<Eigen::Vector3d> mean; // mean-shape landmark vertices
    std::vector<Eigen::Matrix<double, 3, Eigen::Dynamic>> id_rows;
    std::vector<Eigen::Matrix<double, 3, Eigen::Dynamic>> exp_rows;
    std::vector<Eigen::Vector2d> pixels;
    std::vector<double> weights;
};

std::vector<FrameData> gather(const LandmarkObservations& obs, const FaceBasis& basis)
{
    std::vector<FrameData> out;
    for (const auto& frame : obs.frames) {
        FrameData d;
        for (const LandmarkPoint& lp : frame) {
            if (lp.index < 0 || lp.index >= basis.vertex_count()) {
                throw DataError("landmark index " + std::to_string(lp.index) + " out of range");
            }
            if (!(lp.weight >= 0.0) || !lp.pixel.allFinite()) {
                throw DataError("landmark observation must be finite with a non-negative weight");
            }
            d.mean.push_back(basis.mean_shape.segment<3>(3 * lp.index));
            d.id_rows.push_back(basis.axes_id.middleRows<3>(3 * lp.index));
            d.exp_rows.push_back(basis.axes_exp.middleRows<3>(3 * lp.index));
            d.pixels.push_back(lp.pixel);
            d.weights.push_back(lp.weight);
        }
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<Eigen::Vector3d> frame_vertices(const FrameData& d, const Eigen::VectorXd& x_id,
                                            const Eigen::VectorXd& x_exp)
{
    std::vector<Eigen::Vector3d> v(d.mean.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = d.mean[i] + d.id_rows[i] * x_id + d.exp_rows[i] * x_exp;
    }
    return v;
}

double objective(const std::vector<FrameData>& data, const FaceBasis& basis, double w_r, const Eigen::VectorXd& x_id,
                 std::span<const Eigen::VectorXd> x_exp, std::span<const Pose> poses, double* residual_sq = nullptr,
                 double* weight_sum = nullptr)
{
    double data_term = 0.0;
    double wsum = 0.0;
    double prior = (x_id.array() / basis.sigma_id.array()).square().sum();
    for (std::size_t f = 0; f < data.size(); ++f) {
        const auto v = frame_vertices(data[f], x_id, x_exp[f]);
        data_term += pose_cost(v, data[f].pixels, data[f].weights, poses[f].rotation(), poses[f].translation(),
                               poses[f].scale());
        for (double w : data[f].weights) {
            wsum += w;
        }
        prior += (x_exp[f].array() / basis.sigma_exp.array()).square().sum();
    }
    if (residual_sq) {
        *residual_sq = data_term;
    }
    if (weight_sum) {
        *weight_sum = wsum;
    }
    return data_term + w_r * prior;
}

// Exact minimiser of the objective over x_id and every x_exp for fixed poses (Schur complement on the
// arrow-shaped normal equations).
void solve_coefficients(const std::vector<FrameData>& data, const FaceBasis& basis, double w_r,
                        std::span<const Pose> poses, Eigen::VectorXd& x_id, std::vector<Eigen::VectorXd>& x_exp)
{
    const int di = basis.dim_id();
    const int de = basis.dim_exp();
    const Eigen::VectorXd prior_id = w_r * basis.sigma_id.array().square().inverse().matrix();
    const Eigen::VectorXd prior_exp = w_r * basis.sigma_exp.array().square().inverse().matrix();
    Eigen::MatrixXd reduced = prior_id.asDiagonal();
    Eigen::VectorXd reduced_rhs = Eigen::VectorXd::Zero(di);
    std::vector<Eigen::LDLT<Eigen::MatrixXd>> hee(data.size());
    std::vector<Eigen::MatrixXd> hie(data.size());
    std::vector<Eigen::VectorXd> ge(data.size());
    for (std::size_t f = 0; f < data.size(); ++f) {
        const FrameData& d = data[f];
        const Eigen::Matrix<double, 2, 3> sr = poses[f].scale() * poses[f].rotation().topRows<2>();
        Eigen::MatrixXd hii_f = Eigen::MatrixXd::Zero(di, di);
        Eigen::MatrixXd hee_f = prior_exp.asDiagonal();
        hie[f] = Eigen::MatrixXd::Zero(di, de);
        Eigen::VectorXd gi = Eigen::VectorXd::Zero(di);
        ge[f] = Eigen::VectorXd::Zero(de);
        for (std::size_t i = 0; i < d.mean.size(); ++i) {
            const Eigen::MatrixXd bi = sr * d.id_rows[i];
            const Eigen::MatrixXd be = sr * d.exp_rows[i];
            const Eigen::Vector2d target = d.pixels[i] - poses[f].translation() - sr * d.mean[i];
            const double w = d.weights[i];
            hii_f.noalias() += w * bi.transpose() * bi;
            hee_f.noalias() += w * be.transpose() * be;
            hie[f].noalias() += w * bi.transpose() * be;
            gi.noalias() += w * bi.transpose() * target;
            ge[f].noalias() += w * be.transpose() * target;
        }
        hee[f].compute(hee_f);
        reduced += hii_f - hie[f] * hee[f].solve(hie[f].transpose());
        reduced_rhs += gi - hie[f] * hee[f].solve(ge[f]);
    }
    x_id = reduced.ldlt().solve(reduced_rhs);
    x_exp.resize(data.size());
    for (std::size_t f = 0; f < data.size(); ++f) {
        x_exp[f] = hee[f].solve(ge[f] - hie[f].transpose() * x_id);
    }
}

// One Levenberg-Marquardt step over all unknowns jointly (per-frame pose and expression, shared
// identity), eliminating the per-frame blocks through the Schur complement. Alternation alone converges
// slowly when pose and coefficients are coupled; this step is only kept when it lowers the objective.
bool joint_step(const std::vector<FrameData>& data, const FaceBasis& basis, double w_r, double& lambda,
                Eigen::VectorXd& x_id, std::vector<Eigen::VectorXd>& x_exp, std::vector<Pose>& poses, double& current)
{
    const int di = basis.dim_id();
    const int de = basis.dim_exp();
    const int fb = 6 + de;
    const std::size_t frames = data.size();
    const Eigen::ArrayXd inv_id = basis.sigma_id.array().square().inverse();
    const Eigen::ArrayXd inv_exp = basis.sigma_exp.array().square().inverse();

    Eigen::MatrixXd hii = Eigen::MatrixXd::Zero(di, di);
    Eigen::VectorXd gi = Eigen::VectorXd::Zero(di);
    std::vector<Eigen::MatrixXd> hff(frames);
    std::vector<Eigen::MatrixXd> hif(frames);
    std::vector<Eigen::VectorXd> gf(frames);
    hii.diagonal() += w_r * inv_id.matrix();
    gi += w_r * (x_id.array() * inv_id).matrix();
    for (std::size_t f = 0; f < frames; ++f) {
        const FrameData& d = data[f];
        const Eigen::Matrix3d& r = poses[f].rotation();
        const double s = poses[f].scale();
        const Eigen::Matrix<double, 2, 3> sr = s * r.topRows<2>();
        hff[f] = Eigen::MatrixXd::Zero(fb, fb);
        hif[f] = Eigen::MatrixXd::Zero(di, fb);
        gf[f] = Eigen::VectorXd::Zero(fb);
        hff[f].diagonal().tail(de) += w_r * inv_exp.matrix();
        gf[f].tail(de) += w_r * (x_exp[f].array() * inv_exp).matrix();
        Eigen::MatrixXd jf(2, fb);
        for (std::size_t i = 0; i < d.mean.size(); ++i) {
            const Eigen::Vector3d v = d.mean[i] + d.id_rows[i] * x_id + d.exp_rows[i] * x_exp[f];
            const Eigen::Vector3d rv = r * v;
            const Eigen::Vector2d res = s * rv.head<2>() + poses[f].translation() - d.pixels[i];
            jf.leftCols<3>() = -s * skew(rv).topRows<2>();
            jf.block<2, 2>(0, 3).setIdentity();
            jf.col(5) = s * rv.head<2>();
            jf.rightCols(de) = sr * d.exp_rows[i];
            const Eigen::MatrixXd ji = sr * d.id_rows[i];
            const double w = d.weights[i];
            hff[f].noalias() += w * jf.transpose() * jf;
            hif[f].noalias() += w * ji.transpose() * jf;
            hii.noalias() += w * ji.transpose() * ji;
            gf[f].noalias() += w * jf.transpose() * res;
            gi.noalias() += w * ji.transpose() * res;
        }
    }

    for (int attempt = 0; attempt < 8; ++attempt) {
        Eigen::MatrixXd reduced = hii;
        reduced.diagonal() += lambda * (hii.diagonal().array() + 1e-12).matrix();
        Eigen::VectorXd rhs = -gi;
        std::vector<Eigen::LDLT<Eigen::MatrixXd>> blocks(frames);
        for (std::size_t f = 0; f < frames; ++f) {
            Eigen::MatrixXd h = hff[f];
            h.diagonal() += lambda * (hff[f].diagonal().array() + 1e-12).matrix();
            blocks[f].compute(h);
            reduced -= hif[f] * blocks[f].solve(hif[f].transpose());
            rhs += hif[f] * blocks[f].solve(gf[f]);
        }
        const Eigen::VectorXd step_id = reduced.ldlt().solve(rhs);
        Eigen::VectorXd new_id = x_id + step_id;
        std::vector<Eigen::VectorXd> new_exp(frames);
        std::vector<Pose> new_poses;
        bool finite = step_id.allFinite();
        for (std::size_t f = 0; f < frames && finite; ++f) {
            const Eigen::VectorXd step = blocks[f].solve(-gf[f] - hif[f].transpose() * step_id);
            finite = step.allFinite();
            if (!finite) {
                break;
            }
            const Eigen::Matrix3d r = nearest_rotation(rotation_exp(step.head<3>()) * poses[f].rotation());
            new_poses.emplace_back(r, poses[f].translation() + step.segment<2>(3), poses[f].scale() * std::exp(step(5)));
            new_exp[f] = x_exp[f] + step.tail(de);
        }
        if (finite) {
            const double c = objective(data, basis, w_r, new_id, new_exp, new_poses);
            if (c < current) {
                x_id = std::move(new_id);
                x_exp = std::move(new_exp);
                poses = std::move(new_poses);
                current = c;
                lambda = std::max(lambda / 10.0, 1e-12);
                return true;
            }
        }
        lambda *= 10.0;
    }
    return false;
}

} // namespace

Pose fit_pose(std::span<const Eigen::Vector3d> points3d, std::span<const Eigen::Vector2d> points2d)
{
    const std::vector<double> weights(points3d.size(), 1.0);
    return fit_pose_weighted(points3d, points2d, weights);
}

double fit_objective(const LandmarkObservations& obs, const FaceBasis& basis, const FitConfig& config,
                     const Eigen::VectorXd& x_id, std::span<const Eigen::VectorXd> x_exp, std::span<const Pose> poses)
{
    const auto data = gather(obs, basis);
    if (x_exp.size() != data.size() || poses.size() != data.size()) {
        throw DimensionError("fit_objective: one expression and one pose per frame required");
    }
    return objective(data, basis, config.w_r, x_id, x_exp, poses);
}

FitResult fit_identity_expression(const LandmarkObservations& obs, const FaceBasis& basis, const FitConfig& config,
                                  const FitResult* warm_start)
{
    config.validate();
    if (obs.frames.empty()) {
        throw std::invalid_argument("fit_identity_expression: at least one frame required");
    }
    const auto data = gather(obs, basis);
    const std::size_t frames = data.size();

    FitResult fit;
    if (warm_start) {
        if (warm_start->x_exp.size() != frames || warm_start->poses.size() != frames ||
            warm_start->x_id.size() != basis.dim_id()) {
            throw DimensionError("fit_identity_expression: warm start does not match the observations");
        }
        fit.x_id = warm_start->x_id;
        fit.x_exp = warm_start->x_exp;
        fit.poses = warm_start->poses;
    } else {
        fit.x_id = Eigen::VectorXd::Zero(basis.dim_id());
        fit.x_exp.assign(frames, Eigen::VectorXd::Zero(basis.dim_exp()));
        for (const FrameData& d : data) {
            fit.poses.push_back(fit_pose_weighted(d.mean, d.pixels, d.weights));
        }
        solve_coefficients(data, basis, config.w_r, fit.poses, fit.x_id, fit.x_exp);
    }

    double current = objective(data, basis, config.w_r, fit.x_id, fit.x_exp, fit.poses);
    fit.objective_history.push_back(current);
    double lambda = config.damping;
    for (int it = 0; it < config.max_iterations; ++it) {
        const double before = current;
        // (a) pose per frame given the current shape; refine_pose only accepts improving steps.
        for (std::size_t f = 0; f < frames; ++f) {
            const auto v = frame_vertices(data[f], fit.x_id, fit.x_exp[f]);
            fit.poses[f] = refine_pose(v, data[f].pixels, data[f].weights, fit.poses[f], config.pose_iterations,
                                       config.damping);
        }
        // (b) coefficients given poses: the exact minimiser, kept only if it does not increase the objective
        // (guards against round-off in ill-conditioned solves).
        Eigen::VectorXd x_id;
        std::vector<Eigen::VectorXd> x_exp;
        solve_coefficients(data, basis, config.w_r, fit.poses, x_id, x_exp);
        const double candidate = objective(data, basis, config.w_r, x_id, x_exp, fit.poses);
        if (candidate <= objective(data, basis, config.w_r, fit.x_id, fit.x_exp, fit.poses)) {
            fit.x_id = std::move(x_id);
            fit.x_exp = std::move(x_exp);
        }
        current = objective(data, basis, config.w_r, fit.x_id, fit.x_exp, fit.poses);
        joint_step(data, basis, config.w_r, lambda, fit.x_id, fit.x_exp, fit.poses, current);
        fit.objective_history.push_back(current);
        fit.iterations = it + 1;
        if (before - current <= config.tolerance * std::max(before, 1e-300)) {
            fit.converged = true;
            break;
        }
    }
    double residual_sq = 0.0;
    double weight_sum = 0.0;
    objective(data, basis, config.w_r, fit.x_id, fit.x_exp, fit.poses, &residual_sq, &weight_sum);
    fit.rms_residual = weight_sum > 0.0 ? std::sqrt(residual_sq / weight_sum) : 0.0;
    return fit;
}

LandmarkObservations load_landmarks_json(const std::filesystem::path& path)
{
    const nlohmann::json j = json_io::read_json(path);
    LandmarkObservations obs;
    try {
        for (const auto& frame : j.at("frames")) {
            obs.frame_ids.push_back(frame.at("frame").get<int>());
            std::vector<LandmarkPoint> points;
            for (const auto& p : frame.at("points")) {
                if (p.size() < 3 || p.size() > 4) {
                    throw DataError(path.string() + ": landmark entries must be [index, x, y] or [index, x, y, w]");
                }
                LandmarkPoint lp;
                lp.index = p.at(0).get<int>();
                lp.pixel = Eigen::Vector2d(p.at(1).get<double>(), p.at(2).get<double>());
                lp.weight = p.size() == 4 ? p.at(3).get<double>() : 1.0;
                points.push_back(lp);
            }
            obs.frames.push_back(std::move(points));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return obs;
}

void save_landmarks_json(const LandmarkObservations& obs, const std::filesystem::path& path)
{
    nlohmann::json j;
    j["frames"] = nlohmann::json::array();
    for (std::size_t f = 0; f < obs.frames.size(); ++f) {
        nlohmann::json points = nlohmann::json::array();
        for (const LandmarkPoint& p : obs.frames[f]) {
            points.push_back({p.index, p.pixel.x(), p.pixel.y(), p.weight});
        }
        const int id = f < obs.frame_ids.size() ? obs.frame_ids[f] : static_cast<int>(f);
        j["frames"].push_back({{"frame", id}, {"points", points}});
    }
    json_io::write_json(j, path);
}

void save_fit_json(const FitResult& fit, const LandmarkObservations& obs, const Eigen::VectorXd* x_alb,
                   const std::filesystem::path& path)
{
    nlohmann::json j;
    j["x_id"] = json_io::vector_to_json(fit.x_id);
    if (x_alb) {
        j["x_alb"] = json_io::vector_to_json(*x_alb);
    }
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["rms_residual"] = fit.rms_residual;
    j["objective_history"] = fit.objective_history;
    j["frames"] = nlohmann::json::array();
    for (std::size_t f = 0; f < fit.x_exp.size(); ++f) {
        const int id = f < obs.frame_ids.size() ? obs.frame_ids[f] : static_cast<int>(f);
        j["frames"].push_back(
            {{"frame", id}, {"x_exp", json_io::vector_to_json(fit.x_exp[f])}, {"pose", json_io::pose_to_json(fit.poses[f])}});
    }
    json_io::write_json(j, path);
}

} // namespace hmdcap
