#include "hmdcap/synth_face.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "hmdcap/error.hpp"
#include "hmdcap/json_io.hpp"
#include "hmdcap/raster.hpp"
#include "hmdcap/seeding.hpp"

namespace hmdcap {

namespace {

constexpr double kFaceHalfWidth = 1.0;
constexpr double kFaceHalfHeight = 1.3;
constexpr double kFaceDepth = 0.7;
constexpr double kMouthY = 0.72;
constexpr double kMouthHalfWidth = 0.33;
constexpr double kMouthHalfHeight = 0.13;

double gauss2(double dx, double dy, double sx, double sy)
{
    return std::exp(-(dx * dx / (sx * sx) + dy * dy / (sy * sy)));
}

double sigmoid(double x)
{
    return 1.0 / (1.0 + std::exp(-x));
}

struct Layout {
    std::vector<Eigen::Vector2d> uv;
    std::shared_ptr<Topology> triangles;
};

// Rows of vertices over the unit square; a short last row is spread across the full width and
// zipped to the row above so that every vertex is referenced.
Layout grid_layout(int vertex_count)
{
    const int per_row = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(vertex_count))));
    const int full_rows = vertex_count / per_row;
    const int remainder = vertex_count % per_row;
    const int rows = full_rows + (remainder > 0 ? 1 : 0);

    Layout layout;
    layout.triangles = std::make_shared<Topology>();
    std::vector<int> row_start;
    std::vector<int> row_count;
    for (int r = 0; r < rows; ++r) {
        const int count = r < full_rows ? per_row : remainder;
        row_start.push_back(static_cast<int>(layout.uv.size()));
        row_count.push_back(count);
        const double v = -1.0 + 2.0 * r / (rows - 1);
        for (int c = 0; c < count; ++c) {
            const double u = count == 1 ? 0.0 : -1.0 + 2.0 * c / (count - 1);
            layout.uv.emplace_back(u, v);
        }
    }
    for (int r = 0; r + 1 < rows; ++r) {
        int i = 0;
        int j = 0;
        const int na = row_count[r];
        const int nb = row_count[r + 1];
        auto a = [&](int k) { return row_start[r] + k; };
        auto b = [&](int k) { return row_start[r + 1] + k; };
        while (i < na - 1 || j < nb - 1) {
            const bool advance_top =
                j == nb - 1 || (i < na - 1 && layout.uv[a(i + 1)].x() <= layout.uv[b(j + 1)].x());
            if (advance_top) {
                layout.triangles->push_back({a(i), b(j), a(i + 1)});
                ++i;
            } else {
                layout.triangles->push_back({a(i), b(j), b(j + 1)});
                ++j;
            }
        }
    }
    return layout;
}

Eigen::Vector3d face_surface(const Eigen::Vector2d& uv)
{
    const double u = uv.x();
    const double v = uv.y();
    const double x = kFaceHalfWidth * u * std::sqrt(1.0 - v * v / 2.0);
    const double y = kFaceHalfHeight * v * std::sqrt(1.0 - u * u / 2.0);
    const double rho2 = (x / kFaceHalfWidth) * (x / kFaceHalfWidth) + (y / kFaceHalfHeight) * (y / kFaceHalfHeight);
    double z = -kFaceDepth * std::sqrt(std::max(0.0, 1.0 - rho2));
    z -= 0.28 * gauss2(x, y - 0.05, 0.14, 0.3);                     // nose
    z -= 0.05 * gauss2(x, y - kMouthY, kMouthHalfWidth + 0.02, 0.12); // lips
    return {x, y, z};
}

Eigen::Vector3d face_albedo(double x, double y)
{
    const Eigen::Vector3d skin(0.78, 0.60, 0.50);
    const Eigen::Vector3d lip(0.62, 0.30, 0.30);
    const Eigen::Vector3d cavity(0.12, 0.06, 0.06);
    const Eigen::Vector3d brow(0.30, 0.20, 0.15);
    const double q = std::hypot(x / kMouthHalfWidth, (y - kMouthY) / kMouthHalfHeight);
    const double lip_weight = sigmoid((1.0 - q) / 0.08);
    const double cavity_weight = sigmoid((0.45 - q) / 0.06);
    Eigen::Vector3d c = skin * (1.0 - lip_weight) + lip * lip_weight;
    c = c * (1.0 - cavity_weight) + cavity * cavity_weight;
    for (double side : {-1.0, 1.0}) {
        c = c.cwiseProduct(Eigen::Vector3d::Ones() - 0.6 * gauss2(x - side * 0.09, y - 0.33, 0.035, 0.025) *
                                                         Eigen::Vector3d::Ones());
        const double b = gauss2(x - side * 0.4, y + 0.55, 0.2, 0.04);
        c = c * (1.0 - b) + brow * b;
    }
    return c;
}

// Fields over the vertex set; each returns the 3N (or RGB) vector for a vertex predicate.
template <typename Fn>
Eigen::VectorXd field(const Eigen::VectorXd& mean, Fn&& fn)
{
    Eigen::VectorXd out(mean.size());
    for (Eigen::Index i = 0; i < mean.size() / 3; ++i) {
        out.segment<3>(3 * i) = fn(Eigen::Vector3d(mean.segment<3>(3 * i)));
    }
    return out;
}

// Modified Gram-Schmidt, applied twice. Columns that collapse below `min_norm` are reported.
bool orthonormalize(Eigen::MatrixXd& a, const Eigen::MatrixXd* against, int& failed_column)
{
    for (int pass = 0; pass < 2; ++pass) {
        for (int j = 0; j < a.cols(); ++j) {
            const double before = a.col(j).norm();
            if (against) {
                for (int i = 0; i < against->cols(); ++i) {
                    a.col(j) -= against->col(i).dot(a.col(j)) * against->col(i);
                }
            }
            for (int i = 0; i < j; ++i) {
                a.col(j) -= a.col(i).dot(a.col(j)) * a.col(i);
            }
            const double after = a.col(j).norm();
            if (!(after > 1e-6 * before) || after == 0.0) {
                failed_column = j;
                return false;
            }
            a.col(j) /= after;
        }
    }
    return true;
}

Eigen::VectorXd random_bump_field(const Eigen::VectorXd& mean, std::mt19937_64& rng, double x_lo, double x_hi,
                                  double y_lo, double y_hi, double r_lo, double r_hi, int bumps)
{
    std::uniform_real_distribution<double> ux(x_lo, x_hi);
    std::uniform_real_distribution<double> uy(y_lo, y_hi);
    std::uniform_real_distribution<double> ur(r_lo, r_hi);
    std::normal_distribution<double> n01;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(mean.size());
    for (int b = 0; b < bumps; ++b) {
        const Eigen::Vector2d centre(ux(rng), uy(rng));
        const double radius = ur(rng);
        const Eigen::Vector3d dir(n01(rng), n01(rng), n01(rng));
        out += field(mean, [&](const Eigen::Vector3d& v) -> Eigen::Vector3d {
            return gauss2(v.x() - centre.x(), v.y() - centre.y(), radius, radius) * dir;
        });
    }
    return out;
}

double lower_face_weight(double y)
{
    return sigmoid((y - 0.3) / 0.07);
}

Eigen::VectorXd structured_expression(const Eigen::VectorXd& mean, int k)
{
    return field(mean, [k](const Eigen::Vector3d& v) -> Eigen::Vector3d {
        const double x = v.x();
        const double y = v.y();
        switch (k) {
        case 0: { // jaw drop
            const double w = sigmoid((y - kMouthY) / 0.04) * std::exp(-x * x / 0.36);
            return {0.0, w, 0.25 * w};
        }
        case 1: { // smile: corners out and up
            const double g = gauss2(std::abs(x) - 0.3, y - kMouthY, 0.15, 0.15);
            return {(x < 0 ? -1.0 : 1.0) * g, -0.6 * g, 0.0};
        }
        case 2: { // pucker
            const double h = gauss2(x, y - kMouthY, 0.3, 0.2);
            return {-x * h * 2.0, 0.0, -0.5 * h};
        }
        default: { // upper lip raise
            const double h = gauss2(x, y - (kMouthY - 0.1), 0.3, 0.08);
            return {0.0, -h, -0.2 * h};
        }
        }
    });
}

Eigen::Vector3d centroid(const Eigen::VectorXd& mean)
{
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (Eigen::Index i = 0; i < mean.size() / 3; ++i) {
        c += mean.segment<3>(3 * i);
    }
    return c / static_cast<double>(mean.size() / 3);
}

Eigen::MatrixXd rigid_fields(const Eigen::VectorXd& mean)
{
    const Eigen::Vector3d c = centroid(mean);
    Eigen::MatrixXd q(mean.size(), 7);
    for (int axis = 0; axis < 3; ++axis) {
        q.col(axis) = field(mean, [axis](const Eigen::Vector3d&) -> Eigen::Vector3d {
            return Eigen::Vector3d::Unit(axis);
        });
        q.col(3 + axis) = field(mean, [&, axis](const Eigen::Vector3d& v) -> Eigen::Vector3d {
            return Eigen::Vector3d::Unit(axis).cross(v - c);
        });
    }
    q.col(6) = field(mean, [&](const Eigen::Vector3d& v) -> Eigen::Vector3d { return v - c; });
    int failed = -1;
    if (!orthonormalize(q, nullptr, failed)) {
        throw NumericalError("gen_basis: degenerate rigid-motion fields");
    }
    return q;
}

std::vector<int> nearest_unique_vertices(const Eigen::VectorXd& mean, const std::vector<Eigen::Vector2d>& targets,
                                         std::set<int>& used)
{
    std::vector<int> out;
    for (const Eigen::Vector2d& t : targets) {
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < mean.size() / 3; ++i) {
            if (used.count(static_cast<int>(i))) {
                continue;
            }
            const double d = (mean.segment<2>(3 * i) - t).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(i);
            }
        }
        used.insert(best);
        out.push_back(best);
    }
    return out;
}

} // namespace

SyntheticBasisSpec SyntheticBasisSpec::paper()
{
    SyntheticBasisSpec s;
    s.vertex_count = 4900;
    s.dim_id = 100;
    s.dim_exp = 79;
    s.dim_alb = 100;
    s.decay = 0.97;
    return s;
}

SyntheticBasisSpec SyntheticBasisSpec::desk()
{
    return SyntheticBasisSpec{};
}

FaceBasis gen_basis(const SyntheticBasisSpec& spec)
{
    if (spec.vertex_count < 100) {
        throw std::invalid_argument("gen_basis: vertex_count must be >= 100");
    }
    if (spec.dim_id < 1 || spec.dim_exp < 1 || spec.dim_alb < 1) {
        throw std::invalid_argument("gen_basis: dimensions must be >= 1");
    }
    if (!(spec.decay > 0.0 && spec.decay < 1.0)) {
        throw std::invalid_argument("gen_basis: decay must lie in (0, 1)");
    }
    const int n3 = 3 * spec.vertex_count;
    if (spec.dim_id > n3 || spec.dim_exp > n3 || spec.dim_alb > n3) {
        throw DimensionError("gen_basis: a dimension exceeds 3N");
    }

    std::mt19937_64 rng(spec.seed);
    const Layout layout = grid_layout(spec.vertex_count);

    FaceBasis basis;
    basis.triangles = layout.triangles;
    basis.mean_shape.resize(n3);
    basis.mean_albedo.resize(n3);
    for (int i = 0; i < spec.vertex_count; ++i) {
        const Eigen::Vector3d p = face_surface(layout.uv[i]);
        basis.mean_shape.segment<3>(3 * i) = p;
        basis.mean_albedo.segment<3>(3 * i) = face_albedo(p.x(), p.y());
    }
    const Eigen::VectorXd& mean = basis.mean_shape;
    const Eigen::MatrixXd rigid = rigid_fields(mean);

    auto build = [&](int dims, bool remove_rigid, auto&& column) {
        Eigen::MatrixXd axes(n3, dims);
        for (int k = 0; k < dims; ++k) {
            axes.col(k) = column(k);
        }
        int failed = -1;
        for (int attempt = 0; !orthonormalize(axes, remove_rigid ? &rigid : nullptr, failed); ++attempt) {
            if (attempt > 1000) {
                throw NumericalError("gen_basis: could not build independent axes");
            }
            axes.col(failed) = column(failed + 1000 * (attempt + 1));
        }
        return axes;
    };

    basis.axes_id = build(spec.dim_id, true, [&](int) {
        return random_bump_field(mean, rng, -0.9, 0.9, -1.2, 1.2, 0.3, 0.7, 3);
    });
    basis.axes_exp = build(spec.dim_exp, true, [&](int k) -> Eigen::VectorXd {
        Eigen::VectorXd f = k < 4 ? structured_expression(mean, k)
                                  : random_bump_field(mean, rng, -0.55, 0.55, 0.4, 1.1, 0.1, 0.25, 3);
        for (int i = 0; i < spec.vertex_count; ++i) {
            f.segment<3>(3 * i) *= lower_face_weight(mean(3 * i + 1));
        }
        return f;
    });
    basis.axes_alb = build(spec.dim_alb, false, [&](int) {
        return random_bump_field(mean, rng, -0.9, 0.9, -1.2, 1.2, 0.3, 0.8, 3);
    });

    auto decay_scales = [&](int dims) {
        Eigen::VectorXd s(dims);
        for (int k = 0; k < dims; ++k) {
            s(k) = std::pow(spec.decay, k);
        }
        return s;
    };
    basis.sigma_id = decay_scales(spec.dim_id);
    basis.sigma_exp = decay_scales(spec.dim_exp);
    basis.sigma_alb = decay_scales(spec.dim_alb);

    std::vector<Eigen::Vector2d> jaw;
    std::vector<Eigen::Vector2d> nose;
    std::vector<Eigen::Vector2d> mouth;
    const double jaw_limit = 70.0 * std::numbers::pi / 180.0;
    for (int k = 0; k < 13; ++k) {
        const double a = -jaw_limit + 2.0 * jaw_limit * k / 12.0;
        jaw.emplace_back(0.9 * kFaceHalfWidth * std::sin(a), 0.9 * kFaceHalfHeight * std::cos(a));
    }
    for (double x : {-0.12, -0.04, 0.04, 0.12}) {
        nose.emplace_back(x, std::abs(x) > 0.1 ? 0.33 : 0.36);
    }
    for (int k = 0; k < 12; ++k) {
        const double b = 2.0 * std::numbers::pi * k / 12.0;
        mouth.emplace_back(kMouthHalfWidth * std::cos(b), kMouthY + kMouthHalfHeight * std::sin(b));
    }
    std::set<int> used;
    const std::vector<int> mouth_idx = nearest_unique_vertices(mean, mouth, used);
    const std::vector<int> jaw_idx = nearest_unique_vertices(mean, jaw, used);
    const std::vector<int> nose_idx = nearest_unique_vertices(mean, nose, used);
    basis.landmark_indices_lower = jaw_idx;
    basis.landmark_indices_lower.insert(basis.landmark_indices_lower.end(), nose_idx.begin(), nose_idx.end());
    basis.landmark_indices_lower.insert(basis.landmark_indices_lower.end(), mouth_idx.begin(), mouth_idx.end());
    basis.landmark_indices_mouth = mouth_idx;

    basis.validate();
    return basis;
}

HmdProxy HmdProxy::standard()
{
    constexpr double half_w = 1.2;
    constexpr double half_h = 0.825;
    constexpr double radius = 0.25;
    constexpr double z_front = -0.3;
    constexpr double z_back = 0.3;
    constexpr int corner_segments = 4;

    std::vector<Eigen::Vector2d> profile;
    const Eigen::Vector2d corners[4] = {{half_w - radius, half_h - radius},
                                        {-(half_w - radius), half_h - radius},
                                        {-(half_w - radius), -(half_h - radius)},
                                        {half_w - radius, -(half_h - radius)}};
    for (int c = 0; c < 4; ++c) {
        for (int k = 0; k <= corner_segments; ++k) {
            const double a = (c + static_cast<double>(k) / corner_segments) * std::numbers::pi / 2.0;
            profile.push_back(corners[c] + radius * Eigen::Vector2d(std::cos(a), std::sin(a)));
        }
    }
    const int p = static_cast<int>(profile.size());
    HmdProxy hmd;
    hmd.mesh.vertices.resize(3 * (2 * p + 2));
    for (int i = 0; i < p; ++i) {
        hmd.mesh.vertices.segment<3>(3 * i) = Eigen::Vector3d(profile[i].x(), profile[i].y(), z_front);
        hmd.mesh.vertices.segment<3>(3 * (p + i)) = Eigen::Vector3d(profile[i].x(), profile[i].y(), z_back);
    }
    const int front_centre = 2 * p;
    const int back_centre = 2 * p + 1;
    hmd.mesh.vertices.segment<3>(3 * front_centre) = Eigen::Vector3d(0.0, 0.0, z_front);
    hmd.mesh.vertices.segment<3>(3 * back_centre) = Eigen::Vector3d(0.0, 0.0, z_back);
    auto topology = std::make_shared<Topology>();
    for (int i = 0; i < p; ++i) {
        const int j = (i + 1) % p;
        topology->push_back({front_centre, j, i});
        topology->push_back({back_centre, p + i, p + j});
        topology->push_back({i, j, p + j});
        topology->push_back({i, p + j, p + i});
    }
    hmd.mesh.triangles = std::move(topology);
    hmd.mount_offset = Eigen::Vector3d(0.0, 0.2 - half_h, -1.3);
    hmd.scale = 1.0;
    return hmd;
}

Mesh HmdProxy::placed_mesh() const
{
    Mesh out = mesh;
    for (int i = 0; i < out.vertex_count(); ++i) {
        out.vertices.segment<3>(3 * i) = scale * mesh.vertices.segment<3>(3 * i) + mount_offset;
    }
    return out;
}

Image render_face(const FaceBasis& basis, const FaceParams& params, const Pose& pose, int width, int height,
                  const RenderOptions& options)
{
    if (width <= 0 || height <= 0) {
        throw std::invalid_argument("render_face: zero-area viewport");
    }
    const Mesh mesh = evaluate_shape(basis, params);
    const Eigen::VectorXd albedo = evaluate_albedo(basis, params).cwiseMax(0.0).cwiseMin(1.0);
    const Eigen::Vector3d light = options.light_dir.normalized();

    std::vector<Eigen::Vector3d> cam(mesh.vertex_count());
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        cam[i] = to_camera(pose, mesh.vertex(i));
    }
    const int channels = options.rgb ? 3 : 1;
    Image image(height, width, channels, 255);
    std::vector<double> depth(static_cast<std::size_t>(width) * height, std::numeric_limits<double>::infinity());

    for (const Triangle& t : *mesh.triangles) {
        const Eigen::Vector3d& p0 = cam[t[0]];
        const Eigen::Vector3d& p1 = cam[t[1]];
        const Eigen::Vector3d& p2 = cam[t[2]];
        const Eigen::Vector3d normal = (p1 - p0).cross(p2 - p0);
        const double norm = normal.norm();
        if (norm == 0.0) {
            continue;
        }
        const double shade = std::max(0.0, normal.dot(light) / norm);
        const Eigen::Vector3d depths(p0.z(), p1.z(), p2.z());
        raster::for_each_covered_pixel(
            p0.head<2>(), p1.head<2>(), p2.head<2>(), height, width, [&](int r, int c, const Eigen::Vector3d& w) {
                const double z = w.dot(depths);
                const std::size_t k = static_cast<std::size_t>(r) * width + c;
                if (!(z < depth[k])) {
                    return;
                }
                depth[k] = z;
                const Eigen::Vector3d colour = w[0] * albedo.segment<3>(3 * t[0]) +
                                               w[1] * albedo.segment<3>(3 * t[1]) +
                                               w[2] * albedo.segment<3>(3 * t[2]);
                if (channels == 3) {
                    for (int ch = 0; ch < 3; ++ch) {
                        image.at(r, c, ch) = static_cast<std::uint8_t>(
                            std::clamp(std::lround(colour[ch] * shade * 255.0), 0L, 255L));
                    }
                } else {
                    const double gray = 0.299 * colour[0] + 0.587 * colour[1] + 0.114 * colour[2];
                    image.at(r, c) =
                        static_cast<std::uint8_t>(std::clamp(std::lround(gray * shade * 255.0), 0L, 255L));
                }
            });
    }
    return image;
}

Image mask_hmd(const Image& image, const HmdProxy& hmd, const Pose& pose)
{
    Image out = image;
    const Mesh placed = hmd.placed_mesh();
    std::vector<Eigen::Vector2d> projected(placed.vertex_count());
    for (int i = 0; i < placed.vertex_count(); ++i) {
        projected[i] = project(pose, placed.vertex(i));
    }
    for (const Triangle& t : *placed.triangles) {
        raster::for_each_covered_pixel(projected[t[0]], projected[t[1]], projected[t[2]], out.rows(), out.cols(),
                                       [&](int r, int c, const Eigen::Vector3d&) {
                                           for (int ch = 0; ch < out.channels(); ++ch) {
                                               out.at(r, c, ch) = 0;
                                           }
                                       });
    }
    return out;
}

FaceRegion crop_face_region(const Image& image, const Pose& pose, const FaceBasis& basis, const FaceParams& params)
{
    if (image.rows() < kFaceRegionRows || image.cols() < kFaceRegionCols) {
        throw DataError("crop_face_region: image smaller than the face region");
    }
    const std::vector<Eigen::Vector2d> marks = landmarks_2d(basis, params, pose, LandmarkSet::lower);
    Eigen::Vector2d centre = Eigen::Vector2d::Zero();
    for (const Eigen::Vector2d& p : marks) {
        if (p.x() < 0.0 || p.y() < 0.0 || p.x() > image.cols() - 1 || p.y() > image.rows() - 1) {
            throw DataError("crop_face_region: landmark projects outside the image");
        }
        centre += p;
    }
    centre /= static_cast<double>(marks.size());
    const int row0 = static_cast<int>(std::floor(centre.y() + 0.5)) - kFaceRegionRows / 2;
    const int col0 = static_cast<int>(std::floor(centre.x() + 0.5)) - kFaceRegionCols / 2;
    FaceRegion region;
    region.offset.row = std::clamp(row0, 0, image.rows() - kFaceRegionRows);
    region.offset.col = std::clamp(col0, 0, image.cols() - kFaceRegionCols);
    region.image = crop(image, region.offset.row, region.offset.col, kFaceRegionRows, kFaceRegionCols);
    return region;
}

std::vector<Crop> random_crops(const Image& region, int count, std::uint64_t seed)
{
    if (count < 1) {
        throw std::invalid_argument("random_crops: count must be >= 1");
    }
    const int max_row = region.rows() - kFaceInputRows;
    const int max_col = region.cols() - kFaceInputCols;
    if (max_row < 0 || max_col < 0) {
        throw std::invalid_argument("random_crops: region smaller than the crop");
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> rows(0, max_row);
    std::uniform_int_distribution<int> cols(0, max_col);
    std::vector<Crop> out;
    for (int i = 0; i < count; ++i) {
        CropOffset o;
        o.row = rows(rng);
        o.col = cols(rng);
        out.push_back({crop(region, o.row, o.col, kFaceInputRows, kFaceInputCols), o});
    }
    return out;
}

CropOffset centre_crop_offset()
{
    return {(kFaceRegionRows - kFaceInputRows) / 2, (kFaceRegionCols - kFaceInputCols) / 2};
}

namespace {

std::vector<int> split_frames(int total, int subjects)
{
    std::vector<int> out(subjects, total / subjects);
    for (int i = 0; i < total % subjects; ++i) {
        ++out[i];
    }
    return out;
}

} // namespace

FaceDataConfig FaceDataConfig::paper()
{
    FaceDataConfig c;
    c.subjects = 6;
    c.frames_per_subject = split_frames(8608, 6);
    c.crops_per_frame = 10;
    c.test_subject = 5;
    return c;
}

FaceDataConfig FaceDataConfig::desk()
{
    return FaceDataConfig{};
}

int FaceDataConfig::total_frames() const
{
    int total = 0;
    for (int f : frames_per_subject) {
        total += f;
    }
    return total;
}

void FaceDataConfig::validate() const
{
    if (subjects < 1 || static_cast<int>(frames_per_subject.size()) != subjects) {
        throw std::invalid_argument("FaceDataConfig: frames_per_subject must list one count per subject");
    }
    if (crops_per_frame < 1 || image_rows < kFaceRegionRows || image_cols < kFaceRegionCols || base_scale <= 0) {
        throw std::invalid_argument("FaceDataConfig: invalid image or crop settings");
    }
    if (test_subject < -1 || test_subject >= subjects) {
        throw std::invalid_argument("FaceDataConfig: test_subject out of range");
    }
}

void to_json(nlohmann::json& j, const FaceDataConfig& c)
{
    j = {{"subjects", c.subjects},
         {"frames_per_subject", c.frames_per_subject},
         {"crops_per_frame", c.crops_per_frame},
         {"test_subject", c.test_subject},
         {"image_rows", c.image_rows},
         {"image_cols", c.image_cols},
         {"base_scale", c.base_scale},
         {"exp_amplitude", c.exp_amplitude},
         {"id_amplitude", c.id_amplitude},
         {"alb_amplitude", c.alb_amplitude},
         {"yaw_amplitude_deg", c.yaw_amplitude_deg},
         {"pitch_amplitude_deg", c.pitch_amplitude_deg},
         {"roll_amplitude_deg", c.roll_amplitude_deg},
         {"translation_jitter", c.translation_jitter},
         {"light_dir", {c.light_dir.x(), c.light_dir.y(), c.light_dir.z()}},
         {"rgb", c.rgb}};
}

void from_json(const nlohmann::json& j, FaceDataConfig& c)
{
    auto get = [&](const char* key, auto& value) {
        if (j.contains(key)) {
            j.at(key).get_to(value);
        }
    };
    get("subjects", c.subjects);
    get("frames_per_subject", c.frames_per_subject);
    if (j.contains("frames_each")) {
        c.frames_per_subject.assign(c.subjects, j.at("frames_each").get<int>());
    }
    get("crops_per_frame", c.crops_per_frame);
    get("test_subject", c.test_subject);
    get("image_rows", c.image_rows);
    get("image_cols", c.image_cols);
    get("base_scale", c.base_scale);
    get("exp_amplitude", c.exp_amplitude);
    get("id_amplitude", c.id_amplitude);
    get("alb_amplitude", c.alb_amplitude);
    get("yaw_amplitude_deg", c.yaw_amplitude_deg);
    get("pitch_amplitude_deg", c.pitch_amplitude_deg);
    get("roll_amplitude_deg", c.roll_amplitude_deg);
    get("translation_jitter", c.translation_jitter);
    if (j.contains("light_dir")) {
        const auto l = j.at("light_dir").get<std::vector<double>>();
        c.light_dir = Eigen::Vector3d(l.at(0), l.at(1), l.at(2));
    }
    get("rgb", c.rgb);
}

FaceSubject face_subject(const FaceBasis& basis, const FaceDataConfig& config, std::uint64_t seed, int subject)
{
    std::mt19937_64 rng(derive_seed(seed, {1, static_cast<std::uint64_t>(subject)}));
    std::normal_distribution<double> n01;
    FaceSubject s;
    s.id = subject;
    s.x_id.resize(basis.dim_id());
    s.x_alb.resize(basis.dim_alb());
    for (int k = 0; k < basis.dim_id(); ++k) {
        s.x_id(k) = config.id_amplitude * basis.sigma_id(k) * n01(rng);
    }
    for (int k = 0; k < basis.dim_alb(); ++k) {
        s.x_alb(k) = config.alb_amplitude * basis.sigma_alb(k) * n01(rng) * 0.05;
    }
    s.split = subject == config.test_subject ? "test" : "train";
    return s;
}

FaceParams face_frame_params(const FaceBasis& basis, const FaceDataConfig& config, const FaceSubject& subject,
                             std::uint64_t seed, int local_frame)
{
    // Per-subject smooth trajectories (mouth opening/closing, smiling, pulling) plus per-frame jitter.
    std::mt19937_64 traj(derive_seed(seed, {2, static_cast<std::uint64_t>(subject.id)}));
    std::uniform_real_distribution<double> freq(0.15, 0.6);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::mt19937_64 jitter(
        derive_seed(seed, {3, static_cast<std::uint64_t>(subject.id), static_cast<std::uint64_t>(local_frame)}));
    std::uniform_real_distribution<double> u11(-1.0, 1.0);

    FaceParams p;
    p.x_id = subject.x_id;
    p.x_alb = subject.x_alb;
    p.x_exp.resize(basis.dim_exp());
    for (int k = 0; k < basis.dim_exp(); ++k) {
        const double w = freq(traj);
        const double phi = phase(traj);
        p.x_exp(k) = config.exp_amplitude * basis.sigma_exp(k) *
                     (0.7 * std::sin(w * local_frame + phi) + 0.4 * u11(jitter));
    }
    return p;
}

Pose face_frame_pose(const FaceDataConfig& config, std::uint64_t seed, int subject, int local_frame)
{
    std::mt19937_64 rng(derive_seed(seed, {4, static_cast<std::uint64_t>(subject)}));
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    double phi[6];
    for (double& p : phi) {
        p = phase(rng);
    }
    const double deg = std::numbers::pi / 180.0;
    const double f = local_frame;
    const double yaw = config.yaw_amplitude_deg * deg * std::sin(0.11 * f + phi[0]);
    const double pitch = config.pitch_amplitude_deg * deg * std::sin(0.07 * f + phi[1]);
    const double roll = config.roll_amplitude_deg * deg * std::sin(0.05 * f + phi[2]);
    const double scale = config.base_scale * (1.0 + 0.03 * std::sin(0.09 * f + phi[5]));
    const Eigen::Vector2d t(config.image_cols / 2.0 + config.translation_jitter * std::sin(0.13 * f + phi[3]),
                            config.image_rows / 2.0 - 0.2 * config.base_scale +
                                config.translation_jitter * std::sin(0.17 * f + phi[4]));
    return Pose::from_angles(yaw, pitch, roll, t, scale);
}

FaceParams neutral_params(const FaceBasis& basis, const FaceSubject& subject)
{
    FaceParams p;
    p.x_id = subject.x_id;
    p.x_alb = subject.x_alb;
    p.x_exp = Eigen::VectorXd::Zero(basis.dim_exp());
    return p;
}

namespace {

std::string numbered(const char* dir, int index, const char* ext)
{
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%s/%06d%s", dir, index, ext);
    return buffer;
}

nlohmann::json offset_json(const CropOffset& o)
{
    return {{"row", o.row}, {"col", o.col}};
}

CropOffset offset_from_json(const nlohmann::json& j)
{
    return {j.at("row").get<int>(), j.at("col").get<int>()};
}

} // namespace

FaceDataset gen_face_dataset(const FaceBasis& basis, const FaceDataConfig& config, const HmdProxy& hmd,
                             const std::filesystem::path& out_dir, std::uint64_t seed)
{
    config.validate();
    namespace fs = std::filesystem;
    try {
        fs::create_directories(out_dir / "images");
        fs::create_directories(out_dir / "frames");
    } catch (const fs::filesystem_error& e) {
        throw DataError(std::string("cannot create dataset directories: ") + e.what());
    }
    save_basis(basis, out_dir / "basis.feb", {seed, "dataset"});

    FaceDataset ds;
    ds.root = out_dir;
    ds.basis_file = "basis.feb";
    ds.config = config;
    ds.seed = seed;
    const char* ext = config.rgb ? ".png" : ".pgm";
    RenderOptions options;
    options.light_dir = config.light_dir;
    options.rgb = config.rgb;

    std::ofstream labels(out_dir / "labels.jsonl");
    if (!labels) {
        throw DataError("cannot open for writing: " + (out_dir / "labels.jsonl").string());
    }
    int rejected = 0;
    int global_frame = 0;
    for (int s = 0; s < config.subjects; ++s) {
        ds.subjects.push_back(face_subject(basis, config, seed, s));
        const FaceSubject& subject = ds.subjects.back();
        for (int f = 0; f < config.frames_per_subject[s]; ++f, ++global_frame) {
            const FaceParams params = face_frame_params(basis, config, subject, seed, f);
            const Pose pose = face_frame_pose(config, seed, s, f);
            const Image masked =
                mask_hmd(render_face(basis, params, pose, config.image_cols, config.image_rows, options), hmd, pose);
            FaceRegion region;
            try {
                region = crop_face_region(masked, pose, basis, neutral_params(basis, subject));
            } catch (const DataError&) {
                ++rejected;
                continue;
            }
            FaceFrameRecord frame{global_frame, s, numbered("frames", global_frame, ext), params.x_exp, pose,
                                  region.offset, subject.split};
            write_image(masked, out_dir / frame.image);
            ds.frames.push_back(frame);

            const auto crops = random_crops(region.image, config.crops_per_frame,
                                            derive_seed(seed, {5, static_cast<std::uint64_t>(global_frame)}));
            for (const Crop& c : crops) {
                FaceSampleRecord rec{static_cast<int>(ds.samples.size()),
                                     global_frame,
                                     s,
                                     numbered("images", static_cast<int>(ds.samples.size()), ext),
                                     params.x_exp,
                                     pose,
                                     region.offset,
                                     c.offset,
                                     subject.split};
                write_image(c.image, out_dir / rec.image);
                const nlohmann::json line = {{"sample", rec.sample},
                                             {"frame", rec.frame},
                                             {"subject", rec.subject},
                                             {"image", rec.image},
                                             {"x_exp", json_io::vector_to_json(rec.x_exp)},
                                             {"pose", json_io::pose_to_json(rec.pose)},
                                             {"region_offset", offset_json(rec.region_offset)},
                                             {"crop_offset", offset_json(rec.crop_offset)},
                                             {"split", rec.split}};
                labels << line.dump() << '\n';
                ds.samples.push_back(std::move(rec));
            }
        }
    }
    labels.close();
    if (!labels) {
        throw DataError("write failed: " + (out_dir / "labels.jsonl").string());
    }

    nlohmann::json manifest;
    manifest["format"] = "hmdcap-face-dataset";
    manifest["version"] = 1;
    manifest["basis"] = ds.basis_file;
    manifest["seed"] = seed;
    manifest["config"] = config;
    manifest["image_convention"] = "row-major, origin top-left, sizes given as rows x cols";
    manifest["input_rows"] = kFaceInputRows;
    manifest["input_cols"] = kFaceInputCols;
    manifest["region_rows"] = kFaceRegionRows;
    manifest["region_cols"] = kFaceRegionCols;
    manifest["labels"] = "labels.jsonl";
    manifest["sample_count"] = ds.samples.size();
    manifest["frame_count"] = ds.frames.size();
    manifest["rejected_frames"] = rejected;
    for (const FaceSubject& s : ds.subjects) {
        manifest["subjects"].push_back({{"id", s.id},
                                        {"x_id", json_io::vector_to_json(s.x_id)},
                                        {"x_alb", json_io::vector_to_json(s.x_alb)},
                                        {"split", s.split}});
    }
    for (const FaceFrameRecord& f : ds.frames) {
        manifest["frames"].push_back({{"frame", f.frame},
                                      {"subject", f.subject},
                                      {"image", f.image},
                                      {"x_exp", json_io::vector_to_json(f.x_exp)},
                                      {"pose", json_io::pose_to_json(f.pose)},
                                      {"region_offset", offset_json(f.region_offset)},
                                      {"split", f.split}});
    }
    for (const FaceSampleRecord& r : ds.samples) {
        manifest["samples"].push_back({{"image", r.image}, {"label", r.sample}, {"split", r.split}});
    }
    json_io::write_json(manifest, out_dir / "manifest.json");
    return ds;
}

FaceDataset load_face_dataset(const std::filesystem::path& dir)
{
    const nlohmann::json manifest = json_io::read_json(dir / "manifest.json");
    if (manifest.value("format", "") != "hmdcap-face-dataset") {
        throw DataError("not a face dataset manifest: " + (dir / "manifest.json").string());
    }
    FaceDataset ds;
    ds.root = dir;
    try {
        ds.basis_file = manifest.at("basis").get<std::string>();
        ds.config = manifest.at("config").get<FaceDataConfig>();
        ds.seed = manifest.at("seed").get<std::uint64_t>();
        for (const auto& s : manifest.at("subjects")) {
            ds.subjects.push_back({s.at("id").get<int>(), json_io::vector_from_json(s.at("x_id")),
                                   json_io::vector_from_json(s.at("x_alb")), s.at("split").get<std::string>()});
        }
        for (const auto& f : manifest.at("frames")) {
            ds.frames.push_back({f.at("frame").get<int>(), f.at("subject").get<int>(), f.at("image").get<std::string>(),
                                 json_io::vector_from_json(f.at("x_exp")), json_io::pose_from_json(f.at("pose")),
                                 offset_from_json(f.at("region_offset")), f.at("split").get<std::string>()});
        }
        for (const auto& line : json_io::read_jsonl(dir / manifest.at("labels").get<std::string>())) {
            ds.samples.push_back({line.at("sample").get<int>(), line.at("frame").get<int>(),
                                  line.at("subject").get<int>(), line.at("image").get<std::string>(),
                                  json_io::vector_from_json(line.at("x_exp")), json_io::pose_from_json(line.at("pose")),
                                  offset_from_json(line.at("region_offset")), offset_from_json(line.at("crop_offset")),
                                  line.at("split").get<std::string>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed face dataset " + dir.string() + ": " + e.what());
    }
    if (ds.samples.size() != manifest.at("sample_count").get<std::size_t>()) {
        throw DataError("sample count mismatch between manifest and labels in " + dir.string());
    }
    return ds;
}

} // namespace hmdcap
