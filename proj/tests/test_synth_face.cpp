#include <doctest.h>

#include <random>
#include <set>

#include "hmdcap/error.hpp"
#include "hmdcap/face_model.hpp"
#include "hmdcap/image.hpp"
#include "hmdcap/synth_face.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hmdcap;

namespace {

/// A basis whose mean shape is an explicit triangle list with uniform albedo.
FaceBasis triangle_basis(const std::vector<Eigen::Vector3d>& verts, const Topology& tris, double albedo)
{
    FaceBasis b;
    const int n = static_cast<int>(verts.size());
    b.mean_shape.resize(3 * n);
    for (int i = 0; i < n; ++i) {
        b.mean_shape.segment<3>(3 * i) = verts[static_cast<std::size_t>(i)];
    }
    b.mean_albedo = Eigen::VectorXd::Constant(3 * n, albedo);
    b.axes_id = Eigen::MatrixXd::Zero(3 * n, 1);
    b.axes_id(0, 0) = 1.0;
    b.axes_exp = b.axes_id;
    b.axes_alb = b.axes_id;
    b.sigma_id = b.sigma_exp = b.sigma_alb = Eigen::VectorXd::Ones(1);
    b.triangles = std::make_shared<Topology>(tris);
    return b;
}

FaceDataConfig tiny_config()
{
    FaceDataConfig c;
    c.subjects = 2;
    c.frames_per_subject = {4, 4};
    c.test_subject = 1;
    c.crops_per_frame = 10;
    return c;
}

} // namespace

TEST_SUITE("synth_face")
{
    TEST_CASE("generated basis is deterministic and orthonormal")
    {
        const FaceBasis a = gen_basis(SyntheticBasisSpec::desk());
        const FaceBasis b = gen_basis(SyntheticBasisSpec::desk());
        CHECK(a.mean_shape == b.mean_shape);
        CHECK(a.axes_id == b.axes_id);
        CHECK(a.axes_exp == b.axes_exp);
        CHECK(a.axes_alb == b.axes_alb);
        CHECK(*a.triangles == *b.triangles);
        CHECK(a.orthonormality_error() <= 1e-10);
        for (const Eigen::VectorXd* s : {&a.sigma_id, &a.sigma_exp, &a.sigma_alb}) {
            for (Eigen::Index k = 1; k < s->size(); ++k) {
                CHECK((*s)(k) < (*s)(k - 1));
            }
        }
        CHECK(a.landmark_indices_lower.size() == 29);
        CHECK(std::set<int>(a.landmark_indices_lower.begin(), a.landmark_indices_lower.end()).size() == 29);
        SyntheticBasisSpec other = SyntheticBasisSpec::desk();
        other.seed = 2;
        CHECK(gen_basis(other).axes_exp != a.axes_exp);
    }

    TEST_CASE("paper preset dimensions")
    {
        const FaceBasis b = gen_basis(SyntheticBasisSpec::paper());
        CHECK(b.dim_id() == 100);
        CHECK(b.dim_exp() == 79);
        CHECK(b.dim_alb() == 100);
        CHECK(b.orthonormality_error() <= 1e-10);
        CHECK(landmarks_2d(b, FaceParams::zeros(b), Pose(), LandmarkSet::lower).size() == 29);
    }

    TEST_CASE("basis spec validation")
    {
        SyntheticBasisSpec s = SyntheticBasisSpec::desk();
        s.vertex_count = 50;
        CHECK_THROWS(gen_basis(s));
        s = SyntheticBasisSpec::desk();
        s.decay = 1.0;
        CHECK_THROWS(gen_basis(s));
        s = SyntheticBasisSpec::desk();
        s.vertex_count = 100;
        s.dim_exp = 301;
        CHECK_THROWS_AS(gen_basis(s), DimensionError);
    }

    TEST_CASE("basis file round trip")
    {
        const auto dir = testutil::temp_dir("basis_io");
        const FaceBasis a = gen_basis(SyntheticBasisSpec::desk());
        save_basis(a, dir / "b.feb", {7, "desk"});
        const FaceBasis b = load_basis(dir / "b.feb");
        CHECK(testutil::slurp(dir / "b.feb").substr(0, 4) == "FEB1");
        CHECK(a.mean_shape == b.mean_shape);
        CHECK(a.mean_albedo == b.mean_albedo);
        CHECK(a.axes_id == b.axes_id);
        CHECK(a.axes_exp == b.axes_exp);
        CHECK(a.axes_alb == b.axes_alb);
        CHECK(a.sigma_exp == b.sigma_exp);
        CHECK(*a.triangles == *b.triangles);
        CHECK(a.landmark_indices_lower == b.landmark_indices_lower);
        CHECK(a.landmark_indices_mouth == b.landmark_indices_mouth);
        const BasisProvenance p = load_basis_provenance(dir / "b.feb");
        CHECK(p.seed == 7);
        CHECK(p.preset == "desk");
        std::ofstream(dir / "bad.feb") << "FEB2 garbage";
        CHECK_THROWS_AS(load_basis(dir / "bad.feb"), DataError);
    }

    TEST_CASE("mesh outside the viewport renders a uniform background")
    {
        const FaceBasis b = triangle_basis({{500, 500, 0}, {520, 500, 0}, {500, 520, 0}}, {{0, 2, 1}}, 0.5);
        const Image img = render_face(b, FaceParams::zeros(b), Pose(), 64, 48);
        for (std::uint8_t v : img.data()) {
            REQUIRE(v == 255);
        }
        CHECK_THROWS(render_face(b, FaceParams::zeros(b), Pose(), 0, 10));
    }

    TEST_CASE("flat Lambert shading matches the closed form per pixel")
    {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> u(2.0, 60.0);
        std::uniform_real_distribution<double> dz(-20.0, 20.0);
        for (int trial = 0; trial < 10; ++trial) {
            Eigen::Vector3d p0(u(rng), u(rng), dz(rng));
            Eigen::Vector3d p1(u(rng), u(rng), dz(rng));
            Eigen::Vector3d p2(u(rng), u(rng), dz(rng));
            Eigen::Vector3d n = (p1 - p0).cross(p2 - p0);
            if (n.z() > 0) {
                std::swap(p1, p2);
                n = -n;
            }
            const FaceBasis b = triangle_basis({p0, p1, p2}, {{0, 1, 2}}, 0.5);
            const Image img = render_face(b, FaceParams::zeros(b), Pose(), 64, 64);
            const double shade = std::max(0.0, n.normalized().dot(Eigen::Vector3d(0, 0, -1)));
            const auto expected = static_cast<std::uint8_t>(std::lround(0.5 * 255.0 * shade));
            int covered = 0;
            for (int r = 0; r < 64; ++r) {
                for (int c = 0; c < 64; ++c) {
                    if (img.at(r, c) != 255) {
                        CHECK(img.at(r, c) == expected);
                        ++covered;
                    }
                }
            }
            CHECK(covered > 0);
        }
    }

    TEST_CASE("pixel coverage equals brute-force point-in-triangle")
    {
        const std::vector<Eigen::Vector3d> v{{3.3, 4.1, 0}, {40.7, 8.2, 1}, {12.5, 35.9, 2}, {50.2, 30.4, 3},
                                             {30.1, 58.8, 0.5}};
        const Topology tris{{0, 2, 1}, {1, 2, 3}, {2, 4, 3}};
        const FaceBasis b = triangle_basis(v, tris, 0.8);
        const Image img = render_face(b, FaceParams::zeros(b), Pose(), 64, 64, {Eigen::Vector3d(0.2, 0.1, -1), false});
        int mismatches = 0;
        for (int r = 0; r < 64; ++r) {
            for (int c = 0; c < 64; ++c) {
                bool inside = false;
                for (const auto& t : tris) {
                    inside = inside || oracle::inside_triangle(v[t[0]].head<2>(), v[t[1]].head<2>(),
                                                               v[t[2]].head<2>(), Eigen::Vector2d(c, r));
                }
                // shading can produce 255 only for fully lit white; albedo 0.8 keeps covered pixels below it
                mismatches += inside != (img.at(r, c) != 255) ? 1 : 0;
            }
        }
        CHECK(mismatches == 0);
    }

    TEST_CASE("HMD mask examples")
    {
        const FaceBasis b = gen_basis(SyntheticBasisSpec::desk());
        const HmdProxy hmd = HmdProxy::standard();
        const Pose pose = Pose::from_angles(0.0, 0.0, 0.0, Eigen::Vector2d(160, 128), 90.0);
        const Image face = render_face(b, FaceParams::zeros(b), pose, 320, 256);
        const Image masked = mask_hmd(face, hmd, pose);
        const Mesh placed = hmd.placed_mesh();
        Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
        Eigen::Vector2d lo(1e9, 1e9), hi(-1e9, -1e9);
        for (int i = 0; i < placed.vertex_count(); ++i) {
            const Eigen::Vector2d p = project(pose, placed.vertex(i));
            centroid += p;
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        centroid /= placed.vertex_count();
        CHECK(masked.at(static_cast<int>(std::lround(centroid.y())), static_cast<int>(std::lround(centroid.x()))) == 0);
        for (int r = 0; r < 256; ++r) {
            for (int c = 0; c < 320; ++c) {
                if (c < lo.x() - 1 || c > hi.x() + 1 || r < lo.y() - 1 || r > hi.y() + 1) {
                    REQUIRE(masked.at(r, c) == face.at(r, c));
                }
            }
        }
    }

    TEST_CASE("HMD mask equals the exhaustive rasterization oracle over 100 poses")
    {
        const FaceBasis b = gen_basis(SyntheticBasisSpec::desk());
        const HmdProxy hmd = HmdProxy::standard();
        const Mesh placed = hmd.placed_mesh();
        std::mt19937_64 rng(12);
        std::uniform_real_distribution<double> ang(-20.0 * std::numbers::pi / 180.0, 20.0 * std::numbers::pi / 180.0);
        std::uniform_real_distribution<double> shift(-10.0, 10.0);
        int leaks = 0;
        int wrong = 0;
        for (int trial = 0; trial < 100; ++trial) {
            const Pose pose =
                Pose::from_angles(ang(rng), ang(rng), ang(rng), Eigen::Vector2d(160 + shift(rng), 128 + shift(rng)), 90.0);
            FaceParams p = FaceParams::zeros(b);
            p.x_exp = oracle::random_vector(rng, b.dim_exp());
            const Image face = render_face(b, p, pose, 320, 256);
            const Image masked = mask_hmd(face, hmd, pose);
            std::vector<Eigen::Vector2d> proj(placed.vertex_count());
            for (int i = 0; i < placed.vertex_count(); ++i) {
                proj[i] = project(pose, placed.vertex(i));
            }
            for (int r = 0; r < 256; ++r) {
                for (int c = 0; c < 320; ++c) {
                    bool inside = false;
                    for (const auto& t : *placed.triangles) {
                        if (oracle::inside_triangle(proj[t[0]], proj[t[1]], proj[t[2]], Eigen::Vector2d(c, r))) {
                            inside = true;
                            break;
                        }
                    }
                    if (inside) {
                        leaks += masked.at(r, c) != 0 ? 1 : 0;
                    } else {
                        wrong += masked.at(r, c) != face.at(r, c) ? 1 : 0;
                    }
                }
            }
        }
        CHECK(leaks == 0);
        CHECK(wrong == 0);
    }

    TEST_CASE("HMD covers at least half of the frontal face")
    {
        const FaceBasis b = gen_basis(SyntheticBasisSpec::desk());
        const Pose pose = Pose::from_angles(0.0, 0.0, 0.0, Eigen::Vector2d(160, 128), 90.0);
        const Image face = render_face(b, FaceParams::zeros(b), pose, 320, 256);
        const Image masked = mask_hmd(face, HmdProxy::standard(), pose);
        int face_px = 0;
        int hidden = 0;
        for (int r = 0; r < 256; ++r) {
            for (int c = 0; c < 320; ++c) {
                if (face.at(r, c) != 255) {
                    ++face_px;
                    hidden += masked.at(r, c) == 0 ? 1 : 0;
                }
            }
        }
        CHECK(hidden >= 0.5 * face_px);
    }

    TEST_CASE("face region crop")
    {
        const FaceBasis b = gen_basis(SyntheticBasisSpec::desk());
        const FaceParams z = FaceParams::zeros(b);
        const Pose pose = Pose::from_angles(0.0, 0.0, 0.0, Eigen::Vector2d(160, 128), 90.0);
        const Image img = render_face(b, z, pose, 320, 256);
        const FaceRegion r = crop_face_region(img, pose, b, z);
        CHECK(r.image.rows() == 120);
        CHECK(r.image.cols() == 230);
        Eigen::Vector2d c = Eigen::Vector2d::Zero();
        for (const auto& p : landmarks_2d(b, z, pose, LandmarkSet::lower)) {
            c += p;
        }
        c /= 29.0;
        CHECK(std::abs(r.offset.row + 60 - c.y()) <= 0.5);
        CHECK(std::abs(r.offset.col + 115 - c.x()) <= 0.5);

        const Pose shifted = pose.with_translation(pose.translation() + Eigen::Vector2d(5, 0));
        const FaceRegion r2 = crop_face_region(render_face(b, z, shifted, 320, 256), shifted, b, z);
        CHECK(r2.offset.col == r.offset.col + 5);
        CHECK(r2.offset.row == r.offset.row);
        CHECK(r2.image == r.image);

        const Pose off = pose.with_translation(Eigen::Vector2d(-200, 128));
        CHECK_THROWS_AS(crop_face_region(img, off, b, z), DataError);
    }

    TEST_CASE("random crops")
    {
        Image region(120, 230);
        for (int r = 0; r < 120; ++r) {
            for (int c = 0; c < 230; ++c) {
                region.at(r, c) = static_cast<std::uint8_t>((r * 7 + c * 3) % 251);
            }
        }
        const auto a = random_crops(region, 10, 5);
        const auto b = random_crops(region, 10, 5);
        REQUIRE(a.size() == 10);
        std::set<std::pair<int, int>> seen;
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].image.rows() == 112);
            CHECK(a[i].image.cols() == 224);
            CHECK(a[i].offset == b[i].offset);
            CHECK(a[i].offset.row >= 0);
            CHECK(a[i].offset.row <= 8);
            CHECK(a[i].offset.col >= 0);
            CHECK(a[i].offset.col <= 6);
            CHECK(a[i].image.at(0, 0) == region.at(a[i].offset.row, a[i].offset.col));
        }
        // all 9 x 7 positions are reachable
        for (const auto& c : random_crops(region, 2000, 9)) {
            seen.insert({c.offset.row, c.offset.col});
        }
        CHECK(seen.size() == 63);
    }

    TEST_CASE("paper preset sample count")
    {
        CHECK(FaceDataConfig::paper().total_frames() == 8608);
        CHECK(FaceDataConfig::paper().total_samples() == 86080);
    }

    TEST_CASE("dataset generation: counts, labels, re-rendering and determinism")
    {
        const FaceBasis b = gen_basis(SyntheticBasisSpec::desk());
        const HmdProxy hmd = HmdProxy::standard();
        const FaceDataConfig config = tiny_config();
        const auto dir_a = testutil::temp_dir("face_a");
        const auto dir_b = testutil::temp_dir("face_b");
        const FaceDataset a = gen_face_dataset(b, config, hmd, dir_a, 21);
        gen_face_dataset(b, config, hmd, dir_b, 21);
        CHECK(a.samples.size() == 80);
        CHECK(testutil::same_tree(dir_a, dir_b));

        const FaceDataset loaded = load_face_dataset(dir_a);
        REQUIRE(loaded.samples.size() == 80);
        for (std::size_t i = 0; i < loaded.samples.size(); ++i) {
            const FaceSampleRecord& s = loaded.samples[i];
            CHECK(s.x_exp == a.samples[i].x_exp);
            CHECK(s.pose == a.samples[i].pose);
            CHECK(std::filesystem::exists(dir_a / s.image));
            CHECK(s.split == (s.subject == config.test_subject ? "test" : "train"));
        }
        for (const FaceFrameRecord& f : loaded.frames) {
            const FaceSubject& subject = loaded.subjects.at(static_cast<std::size_t>(f.subject));
            const int local = f.subject == 0 ? f.frame : f.frame - config.frames_per_subject[0];
            const FaceParams p = face_frame_params(b, config, subject, 21, local);
            CHECK(p.x_exp == f.x_exp);
            FaceParams stored = neutral_params(b, subject);
            stored.x_exp = f.x_exp;
            const Image rerendered =
                mask_hmd(render_face(b, stored, f.pose, config.image_cols, config.image_rows,
                                     {config.light_dir, config.rgb}),
                         hmd, f.pose);
            CHECK(rerendered == read_image(dir_a / f.image));
        }
        const auto dir_c = testutil::temp_dir("face_c");
        gen_face_dataset(b, config, hmd, dir_c, 22);
        CHECK_FALSE(testutil::same_tree(dir_a, dir_c));
    }
}
