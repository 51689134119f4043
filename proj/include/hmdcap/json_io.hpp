#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "hmdcap/error.hpp"
#include "hmdcap/face_model.hpp"

namespace hmdcap::json_io {

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j)
{
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

/// 9 rotation entries (row-major), 2 translation entries, scale.
inline nlohmann::json pose_to_json(const Pose& pose)
{
    std::vector<double> flat;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            flat.push_back(pose.rotation()(r, c));
        }
    }
    flat.push_back(pose.translation().x());
    flat.push_back(pose.translation().y());
    flat.push_back(pose.scale());
    return flat;
}

inline Pose pose_from_json(const nlohmann::json& j)
{
    const auto flat = j.get<std::vector<double>>();
    if (flat.size() != 12) {
        throw DataError("pose record must hold 12 reals");
    }
    Eigen::Matrix3d r;
    for (int i = 0; i < 9; ++i) {
        r(i / 3, i % 3) = flat[i];
    }
    return Pose(r, Eigen::Vector2d(flat[9], flat[10]), flat[11]);
}

inline nlohmann::json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open: " + path.string());
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path)
{
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
}

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open: " + path.string());
    }
    std::vector<nlohmann::json> records;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            try {
                records.push_back(nlohmann::json::parse(line));
            } catch (const nlohmann::json::exception& e) {
                throw DataError(path.string() + ": " + e.what());
            }
        }
    }
    return records;
}

} // namespace hmdcap::json_io
