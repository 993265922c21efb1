#pragma once

#include "ksc/config.hpp"
#include "ksc/orchestrator.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace ksc {

inline constexpr int kMetricsVersion = 1;
inline constexpr int kTrajectoryVersion = 1;
inline constexpr int kSummaryVersion = 1;
inline constexpr int kManifestVersion = 1;

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t value);
/// FNV-1a of a file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

/// Header line of the per-step metrics CSV.
void write_metrics_header(std::ostream& out);
/// One row per step: episode, stage, k, R-partial, r_true, r_model, L_Q, L_pi,
/// spread, innovation, true_norm. Empty cells for values that do not apply.
void write_metrics_rows(std::ostream& out, const EpisodeRecord& record);

/// Per-step trajectory: k, actions, rewards, true norm and (when recorded)
/// the truth and estimated fields on the rl grid.
void write_trajectory(const EpisodeRecord& record, const std::filesystem::path& path);

struct TrajectoryRow {
    int k = 0;
    double r_true = 0.0;
};
/// Reads back the k and r_true columns; checks the version line.
std::vector<TrajectoryRow> read_trajectory(const std::filesystem::path& path);

nlohmann::json episode_summary(const EpisodeRecord& record);

/// Records every output of a run with its hash so reruns can be checked.
struct RunManifest {
    std::string command;
    std::string config_path;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<std::filesystem::path> outputs;
    std::string started;
    std::string finished;
};

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
std::string utc_timestamp();

}  // namespace ksc
