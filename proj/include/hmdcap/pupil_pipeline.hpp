#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hmdcap/ellipse.hpp"
#include "hmdcap/image.hpp"

namespace hmdcap {

struct PixelCoord {
    int row = 0;
    int col = 0;
    bool operator==(const PixelCoord&) const = default;
};

/// Interior pixel minimising the 5x5 box sum around it; ties go to the smallest row, then column.
PixelCoord darkest_point(const Image& image);

struct PupilMask {
    Image mask;                      ///< 1 inside, 0 outside
    std::vector<PixelCoord> contour; ///< Moore trace of the boundary pixels, closed (first == start)
};

/// Central-difference gradient magnitude (one-sided at the border), row-major.
std::vector<double> gradient_magnitude(const Image& image);

/// Two-marker watershed on the gradient image: the seed against the image border plus pixels clearly
/// brighter than the seed neighbourhood. Returns 1 for the seed basin, 2 otherwise.
Image watershed_labels(const Image& image, PixelCoord seed);

/// Hole filling, 3x3-cross closing and seed-component selection, repeated to a fixed point.
Image refine_mask(const Image& mask, PixelCoord seed);

/// Watershed followed by refinement and boundary tracing. Throws std::invalid_argument for border seeds.
PupilMask segment_pupil(const Image& image, PixelCoord seed);

/// Midpoints of the mask's boundary cracks (pixel-edge segments between inside and outside).
std::vector<Eigen::Vector2d> boundary_points(const Image& mask);

/// Direct least-squares ellipse fit (numerically stable form, points normalised first).
/// Throws std::invalid_argument for fewer than 6 points and NumericalError for non-elliptic solutions.
EllipseFit fit_ellipse(std::span<const Eigen::Vector2d> points);

struct PupilLabels {
    Eigen::Vector2d centre;
    double size = 0.0;
};

PupilLabels pupil_labels(const EllipseFit& fit);

struct GazeAngles {
    double pitch = 0.0;
    double yaw = 0.0;
};

/// Ellipse axis-ratio gaze: inclination acos(b/a) along the minor axis, signed towards the pupil's
/// displacement from `image_centre`.
GazeAngles gaze_baseline(const EllipseFit& fit, const Eigen::Vector2d& image_centre);

struct PupilDetection {
    PixelCoord seed;
    PupilMask mask;
    EllipseFit fit;
};

/// darkest_point -> segment_pupil -> fit_ellipse. Boundary points touching saturated pixels (glints)
/// are dropped from the fit while enough remain.
PupilDetection detect_pupil(const Image& image);

/// Writes seed heatmap, watershed labels, refined mask and ellipse overlay next to `prefix`.
void dump_pupil_debug(const Image& image, const std::filesystem::path& prefix);

} // namespace hmdcap
