#include "hmdcap/pupil_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <queue>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "hmdcap/error.hpp"
#include "hmdcap/synth_eye.hpp"

namespace hmdcap {

PixelCoord darkest_point(const Image& image)
{
    if (image.rows() < 5 || image.cols() < 5) {
        throw std::invalid_argument("darkest_point: image must be at least 5x5");
    }
    if (image.channels() != 1) {
        throw std::invalid_argument("darkest_point: grayscale image required");
    }
    const int rows = image.rows();
    const int cols = image.cols();
    // Summed-area table with a zero first row/column.
    std::vector<std::int64_t> sat(static_cast<std::size_t>(rows + 1) * (cols + 1), 0);
    auto at = [&](int r, int c) -> std::int64_t& { return sat[static_cast<std::size_t>(r) * (cols + 1) + c]; };
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            at(r + 1, c + 1) = image.at(r, c) + at(r, c + 1) + at(r + 1, c) - at(r, c);
        }
    }
    PixelCoord best{2, 2};
    std::int64_t best_sum = std::numeric_limits<std::int64_t>::max();
    for (int r = 2; r < rows - 2; ++r) {
        for (int c = 2; c < cols - 2; ++c) {
            const std::int64_t s = at(r + 3, c + 3) - at(r - 2, c + 3) - at(r + 3, c - 2) + at(r - 2, c - 2);
            if (s < best_sum) {
                best_sum = s;
                best = {r, c};
            }
        }
    }
    return best;
}

std::vector<double> gradient_magnitude(const Image& image)
{
    const int rows = image.rows();
    const int cols = image.cols();
    std::vector<double> g(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int cl = std::max(c - 1, 0);
            const int cr = std::min(c + 1, cols - 1);
            const int ru = std::max(r - 1, 0);
            const int rd = std::min(r + 1, rows - 1);
            const double gx = (static_cast<double>(image.at(r, cr)) - image.at(r, cl)) / std::max(1, cr - cl);
            const double gy = (static_cast<double>(image.at(rd, c)) - image.at(ru, c)) / std::max(1, rd - ru);
            g[static_cast<std::size_t>(r) * cols + c] = std::hypot(gx, gy);
        }
    }
    return g;
}

namespace {

constexpr int kDr[4] = {-1, 0, 1, 0};
constexpr int kDc[4] = {0, 1, 0, -1};

void check_seed(const Image& image, PixelCoord seed)
{
    if (seed.row <= 0 || seed.col <= 0 || seed.row >= image.rows() - 1 || seed.col >= image.cols() - 1) {
        throw std::invalid_argument("segment_pupil: seed must lie strictly inside the image");
    }
}

// Background pixels 4-connected to the image border; everything else becomes foreground.
Image fill_holes(const Image& mask)
{
    const int rows = mask.rows();
    const int cols = mask.cols();
    Image outside(rows, cols, 1, 0);
    std::vector<PixelCoord> stack;
    auto visit = [&](int r, int c) {
        if (mask.at(r, c) == 0 && outside.at(r, c) == 0) {
            outside.at(r, c) = 1;
            stack.push_back({r, c});
        }
    };
    for (int r = 0; r < rows; ++r) {
        visit(r, 0);
        visit(r, cols - 1);
    }
    for (int c = 0; c < cols; ++c) {
        visit(0, c);
        visit(rows - 1, c);
    }
    while (!stack.empty()) {
        const PixelCoord p = stack.back();
        stack.pop_back();
        for (int k = 0; k < 4; ++k) {
            const int r = p.row + kDr[k];
            const int c = p.col + kDc[k];
            if (r >= 0 && c >= 0 && r < rows && c < cols) {
                visit(r, c);
            }
        }
    }
    Image out(rows, cols, 1, 0);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            out.at(r, c) = outside.at(r, c) ? 0 : 1;
        }
    }
    return out;
}

// Dilation then erosion with the 3x3 cross; outside the image counts as background for the dilation
// and as foreground for the erosion, which keeps the closing extensive.
Image close_cross(const Image& mask)
{
    const int rows = mask.rows();
    const int cols = mask.cols();
    Image dilated(rows, cols, 1, 0);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            bool on = mask.at(r, c) != 0;
            for (int k = 0; k < 4 && !on; ++k) {
                const int rr = r + kDr[k];
                const int cc = c + kDc[k];
                on = rr >= 0 && cc >= 0 && rr < rows && cc < cols && mask.at(rr, cc) != 0;
            }
            dilated.at(r, c) = on ? 1 : 0;
        }
    }
    Image out(rows, cols, 1, 0);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            bool on = dilated.at(r, c) != 0;
            for (int k = 0; k < 4 && on; ++k) {
                const int rr = r + kDr[k];
                const int cc = c + kDc[k];
                on = rr < 0 || cc < 0 || rr >= rows || cc >= cols || dilated.at(rr, cc) != 0;
            }
            out.at(r, c) = on ? 1 : 0;
        }
    }
    return out;
}

Image seed_component(const Image& mask, PixelCoord seed)
{
    Image out(mask.rows(), mask.cols(), 1, 0);
    if (mask.at(seed.row, seed.col) == 0) {
        return out;
    }
    std::vector<PixelCoord> stack{seed};
    out.at(seed.row, seed.col) = 1;
    while (!stack.empty()) {
        const PixelCoord p = stack.back();
        stack.pop_back();
        for (int k = 0; k < 4; ++k) {
            const int r = p.row + kDr[k];
            const int c = p.col + kDc[k];
            if (r >= 0 && c >= 0 && r < mask.rows() && c < mask.cols() && mask.at(r, c) && !out.at(r, c)) {
                out.at(r, c) = 1;
                stack.push_back({r, c});
            }
        }
    }
    return out;
}

// Moore-neighbour tracing (8-neighbourhood, clockwise in a y-down frame) with Jacob's stopping rule.
std::vector<PixelCoord> trace_boundary(const Image& mask)
{
    const int rows = mask.rows();
    const int cols = mask.cols();
    auto on = [&](int r, int c) { return r >= 0 && c >= 0 && r < rows && c < cols && mask.at(r, c) != 0; };
    PixelCoord start{-1, -1};
    for (int r = 0; r < rows && start.row < 0; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (on(r, c)) {
                start = {r, c};
                break;
            }
        }
    }
    if (start.row < 0) {
        return {};
    }
    static constexpr int nr[8] = {0, 1, 1, 1, 0, -1, -1, -1};
    static constexpr int nc[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
    auto direction = [](int dr, int dc) {
        for (int k = 0; k < 8; ++k) {
            if (nr[k] == dr && nc[k] == dc) {
                return k;
            }
        }
        return 0;
    };
    std::vector<PixelCoord> contour{start};
    PixelCoord current = start;
    // Entered from the west (the pixel to the left of the first foreground pixel in raster order is background).
    PixelCoord backtrack{start.row, start.col - 1};
    const std::size_t limit = 4 * static_cast<std::size_t>(rows) * cols + 8;
    while (contour.size() < limit) {
        const int from = direction(backtrack.row - current.row, backtrack.col - current.col);
        bool found = false;
        for (int k = 1; k <= 8; ++k) {
            const int d = (from + k) % 8;
            const int r = current.row + nr[d];
            const int c = current.col + nc[d];
            if (on(r, c)) {
                const int prev = (from + k - 1) % 8;
                backtrack = {current.row + nr[prev], current.col + nc[prev]};
                current = {r, c};
                found = true;
                break;
            }
        }
        if (!found) {
            break; // isolated pixel
        }
        if (current == start && contour.size() > 1) {
            contour.push_back(current);
            break;
        }
        contour.push_back(current);
    }
    if (contour.size() == 1) {
        contour.push_back(start);
    }
    return contour;
}

// Pixels clearly brighter than the pupil (kMarkerContrast above the seed's 5x5 mean), eroded by
// kMarkerErosion so that the whole pupil edge stays unlabelled and the floods meet on its ridge.
// With the border alone as background the floods would meet on the strongest ridge (iris/sclera).
constexpr int kMarkerContrast = 25;
constexpr int kMarkerErosion = 2;

std::vector<int> background_marker(const Image& image, PixelCoord seed)
{
    const int rows = image.rows();
    const int cols = image.cols();
    int sum = 0;
    int count = 0;
    for (int r = std::max(0, seed.row - 2); r <= std::min(rows - 1, seed.row + 2); ++r) {
        for (int c = std::max(0, seed.col - 2); c <= std::min(cols - 1, seed.col + 2); ++c) {
            sum += image.at(r, c);
            ++count;
        }
    }
    const int threshold = sum / count + kMarkerContrast;
    // Separable erosion with a square window; outside the image counts as bright.
    std::vector<std::uint8_t> bright(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            bright[static_cast<std::size_t>(r) * cols + c] = image.at(r, c) >= threshold;
        }
    }
    std::vector<std::uint8_t> pass(bright.size());
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            bool on = true;
            for (int d = -kMarkerErosion; d <= kMarkerErosion && on; ++d) {
                const int cc = c + d;
                on = cc < 0 || cc >= cols || bright[static_cast<std::size_t>(r) * cols + cc];
            }
            pass[static_cast<std::size_t>(r) * cols + c] = on;
        }
    }
    std::vector<int> marker;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            bool on = true;
            for (int d = -kMarkerErosion; d <= kMarkerErosion && on; ++d) {
                const int rr = r + d;
                on = rr < 0 || rr >= rows || pass[static_cast<std::size_t>(rr) * cols + c];
            }
            if (on && !(r == seed.row && c == seed.col)) {
                marker.push_back(r * cols + c);
            }
        }
    }
    return marker;
}

} // namespace

Image watershed_labels(const Image& image, PixelCoord seed)
{
    check_seed(image, seed);
    const int rows = image.rows();
    const int cols = image.cols();
    const std::vector<double> grad = gradient_magnitude(image);
    Image labels(rows, cols, 1, 0);

    struct Entry {
        double level;
        std::uint64_t order;
        int index;
        std::uint8_t label;
        bool operator>(const Entry& o) const { return level != o.level ? level > o.level : order > o.order; }
    };
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
    std::uint64_t order = 0;
    auto push = [&](int r, int c, std::uint8_t label) {
        const int i = r * cols + c;
        queue.push({grad[static_cast<std::size_t>(i)], order++, i, label});
    };
    push(seed.row, seed.col, 1);
    for (int i : background_marker(image, seed)) {
        push(i / cols, i % cols, 2);
    }
    for (int c = 0; c < cols; ++c) {
        push(0, c, 2);
        push(rows - 1, c, 2);
    }
    for (int r = 1; r < rows - 1; ++r) {
        push(r, 0, 2);
        push(r, cols - 1, 2);
    }
    while (!queue.empty()) {
        const Entry e = queue.top();
        queue.pop();
        const int r = e.index / cols;
        const int c = e.index % cols;
        if (labels.at(r, c) != 0) {
            continue;
        }
        labels.at(r, c) = e.label;
        for (int k = 0; k < 4; ++k) {
            const int rr = r + kDr[k];
            const int cc = c + kDc[k];
            if (rr >= 0 && cc >= 0 && rr < rows && cc < cols && labels.at(rr, cc) == 0) {
                push(rr, cc, e.label);
            }
        }
    }
    return labels;
}

Image refine_mask(const Image& mask, PixelCoord seed)
{
    Image current = seed_component(mask, seed);
    for (;;) {
        Image next = seed_component(close_cross(fill_holes(current)), seed);
        next = fill_holes(next);
        if (next == current) {
            return current;
        }
        current = std::move(next);
    }
}

PupilMask segment_pupil(const Image& image, PixelCoord seed)
{
    if (image.channels() != 1) {
        throw std::invalid_argument("segment_pupil: grayscale image required");
    }
    check_seed(image, seed);
    const Image labels = watershed_labels(image, seed);
    Image mask(image.rows(), image.cols(), 1, 0);
    for (int r = 0; r < image.rows(); ++r) {
        for (int c = 0; c < image.cols(); ++c) {
            mask.at(r, c) = labels.at(r, c) == 1 ? 1 : 0;
        }
    }
    PupilMask out;
    out.mask = refine_mask(mask, seed);
    out.contour = trace_boundary(out.mask);
    return out;
}

std::vector<Eigen::Vector2d> boundary_points(const Image& mask)
{
    std::vector<Eigen::Vector2d> points;
    auto on = [&](int r, int c) {
        return r >= 0 && c >= 0 && r < mask.rows() && c < mask.cols() && mask.at(r, c) != 0;
    };
    for (int r = 0; r < mask.rows(); ++r) {
        for (int c = 0; c < mask.cols(); ++c) {
            if (!on(r, c)) {
                continue;
            }
            for (int k = 0; k < 4; ++k) {
                if (!on(r + kDr[k], c + kDc[k])) {
                    points.emplace_back(c + 0.5 * kDc[k], r + 0.5 * kDr[k]);
                }
            }
        }
    }
    return points;
}

EllipseFit fit_ellipse(std::span<const Eigen::Vector2d> points)
{
    const auto n = static_cast<Eigen::Index>(points.size());
    if (n < 6) {
        throw std::invalid_argument("fit_ellipse: at least 6 points required");
    }
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& p : points) {
        mean += p;
    }
    mean /= static_cast<double>(n);
    double spread = 0.0;
    for (const auto& p : points) {
        spread += (p - mean).squaredNorm();
    }
    spread = std::sqrt(spread / static_cast<double>(n));
    if (!(spread > 0.0)) {
        throw NumericalError("fit_ellipse: all points coincide");
    }

    Eigen::MatrixXd d1(n, 3);
    Eigen::MatrixXd d2(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Vector2d q = (points[static_cast<std::size_t>(i)] - mean) / spread;
        d1.row(i) << q.x() * q.x(), q.x() * q.y(), q.y() * q.y();
        d2.row(i) << q.x(), q.y(), 1.0;
    }
    const Eigen::Matrix3d s1 = d1.transpose() * d1;
    const Eigen::Matrix3d s2 = d1.transpose() * d2;
    const Eigen::Matrix3d s3 = d2.transpose() * d2;
    const Eigen::FullPivLU<Eigen::Matrix3d> s3_lu(s3);
    if (!s3_lu.isInvertible()) {
        throw NumericalError("fit_ellipse: degenerate (collinear) points");
    }
    const Eigen::Matrix3d t = -s3_lu.solve(s2.transpose());
    const Eigen::Matrix3d m = s1 + s2 * t;
    Eigen::Matrix3d reduced;
    reduced.row(0) = m.row(2) / 2.0;
    reduced.row(1) = -m.row(1);
    reduced.row(2) = m.row(0) / 2.0;
    const Eigen::EigenSolver<Eigen::Matrix3d> solver(reduced);

    Eigen::Matrix<double, 6, 1> best;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
        const Eigen::Vector3d a1 = solver.eigenvectors().col(k).real();
        const double constraint = 4.0 * a1(0) * a1(2) - a1(1) * a1(1);
        if (!(constraint > 0.0)) {
            continue;
        }
        const Eigen::Vector3d a2 = t * a1;
        const double cost = ((d1 * a1 + d2 * a2).squaredNorm()) / constraint;
        if (cost < best_cost) {
            best_cost = cost;
            best << a1, a2;
        }
    }
    if (!std::isfinite(best_cost)) {
        throw NumericalError("fit_ellipse: no elliptic solution");
    }

    // Conic in normalised coordinates: A x^2 + B xy + C y^2 + D x + E y + F = 0.
    const double A = best(0), B = best(1), C = best(2), D = best(3), E = best(4), F = best(5);
    Eigen::Matrix2d q;
    q << 2.0 * A, B, B, 2.0 * C;
    const Eigen::Vector2d centre_n = q.inverse() * Eigen::Vector2d(-D, -E);
    const double f0 = F + 0.5 * (D * centre_n.x() + E * centre_n.y());
    Eigen::Matrix2d quad;
    quad << A, B / 2.0, B / 2.0, C;
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(quad);
    const Eigen::Vector2d lambda = eig.eigenvalues();
    const double r0 = -f0 / lambda(0);
    const double r1 = -f0 / lambda(1);
    if (!(r0 > 0.0 && r1 > 0.0)) {
        throw NumericalError("fit_ellipse: imaginary ellipse");
    }
    // Larger semi-axis belongs to the eigenvalue of smaller magnitude.
    const int major = r0 >= r1 ? 0 : 1;
    EllipseFit e;
    e.centre = mean + spread * centre_n;
    e.a = spread * std::sqrt(std::max(r0, r1));
    e.b = spread * std::sqrt(std::min(r0, r1));
    const Eigen::Vector2d axis = eig.eigenvectors().col(major);
    double angle = std::atan2(axis.y(), axis.x());
    angle = std::fmod(angle, std::numbers::pi);
    if (angle < 0.0) {
        angle += std::numbers::pi;
    }
    if (angle >= std::numbers::pi) {
        angle = 0.0;
    }
    e.orientation = angle;
    return e;
}

PupilLabels pupil_labels(const EllipseFit& fit)
{
    return {fit.centre, 2.0 * fit.a};
}

GazeAngles gaze_baseline(const EllipseFit& fit, const Eigen::Vector2d& image_centre)
{
    const double inclination = std::acos(std::clamp(fit.b / fit.a, 0.0, 1.0));
    Eigen::Vector2d minor(-std::sin(fit.orientation), std::cos(fit.orientation));
    if (minor.dot(fit.centre - image_centre) < 0.0) {
        minor = -minor;
    }
    const Eigen::Vector3d g(std::sin(inclination) * minor.x(), -std::sin(inclination) * minor.y(),
                            std::cos(inclination));
    return {std::asin(std::clamp(g.y(), -1.0, 1.0)), std::atan2(g.x(), g.z())};
}

PupilDetection detect_pupil(const Image& image)
{
    PupilDetection out;
    out.seed = darkest_point(image);
    out.mask = segment_pupil(image, out.seed);
    const std::vector<Eigen::Vector2d> all = boundary_points(out.mask.mask);
    std::vector<Eigen::Vector2d> clean;
    clean.reserve(all.size());
    for (const Eigen::Vector2d& p : all) {
        bool near_glint = false;
        const int r0 = static_cast<int>(std::floor(p.y())) - 1;
        const int c0 = static_cast<int>(std::floor(p.x())) - 1;
        for (int r = r0; r <= r0 + 3 && !near_glint; ++r) {
            for (int c = c0; c <= c0 + 3 && !near_glint; ++c) {
                near_glint = r >= 0 && c >= 0 && r < image.rows() && c < image.cols() && image.at(r, c) == 255;
            }
        }
        if (!near_glint) {
            clean.push_back(p);
        }
    }
    out.fit = fit_ellipse(clean.size() >= 6 && 2 * clean.size() >= all.size() ? clean : all);
    return out;
}

void dump_pupil_debug(const Image& image, const std::filesystem::path& prefix)
{
    const PixelCoord seed = darkest_point(image);
    // Seed heatmap: box sums rescaled to 0..255, seed marked black.
    Image heat(image.rows(), image.cols(), 1, 255);
    {
        std::vector<double> sums(static_cast<std::size_t>(image.rows()) * image.cols(), 0.0);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (int r = 2; r < image.rows() - 2; ++r) {
            for (int c = 2; c < image.cols() - 2; ++c) {
                double s = 0.0;
                for (int i = -2; i <= 2; ++i) {
                    for (int j = -2; j <= 2; ++j) {
                        s += image.at(r + i, c + j);
                    }
                }
                sums[static_cast<std::size_t>(r) * image.cols() + c] = s;
                lo = std::min(lo, s);
                hi = std::max(hi, s);
            }
        }
        for (int r = 2; r < image.rows() - 2; ++r) {
            for (int c = 2; c < image.cols() - 2; ++c) {
                const double s = sums[static_cast<std::size_t>(r) * image.cols() + c];
                heat.at(r, c) = static_cast<std::uint8_t>(std::lround(255.0 * (s - lo) / std::max(hi - lo, 1.0)));
            }
        }
        heat.at(seed.row, seed.col) = 0;
    }
    Image labels = watershed_labels(image, seed);
    for (auto& v : labels.data()) {
        v = v == 1 ? 255 : 64;
    }
    const PupilDetection d = detect_pupil(image);
    Image mask = d.mask.mask;
    for (auto& v : mask.data()) {
        v = v ? 255 : 0;
    }
    Image overlay(image.rows(), image.cols(), 3, 0);
    for (int r = 0; r < image.rows(); ++r) {
        for (int c = 0; c < image.cols(); ++c) {
            for (int ch = 0; ch < 3; ++ch) {
                overlay.at(r, c, ch) = image.at(r, c);
            }
        }
    }
    for (int k = 0; k < 720; ++k) {
        const double t = k * std::numbers::pi / 360.0;
        const double ct = std::cos(d.fit.orientation);
        const double st = std::sin(d.fit.orientation);
        const double u = d.fit.a * std::cos(t);
        const double v = d.fit.b * std::sin(t);
        const int c = static_cast<int>(std::lround(d.fit.centre.x() + ct * u - st * v));
        const int r = static_cast<int>(std::lround(d.fit.centre.y() + st * u + ct * v));
        if (r >= 0 && c >= 0 && r < image.rows() && c < image.cols()) {
            overlay.at(r, c, 0) = 255;
            overlay.at(r, c, 1) = 0;
            overlay.at(r, c, 2) = 0;
        }
    }
    const std::string base = prefix.string();
    write_pnm(heat, base + "_seed.pgm");
    write_pnm(labels, base + "_watershed.pgm");
    write_pnm(mask, base + "_mask.pgm");
    write_png(overlay, base + "_overlay.png");
}

} // namespace hmdcap
