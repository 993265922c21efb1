#include "ksc/io.hpp"

#include "ksc/errors.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ksc {

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    std::ostringstream s;
    s << std::hex;
    s.width(16);
    s.fill('0');
    s << value;
    return s.str();
}

std::string file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot hash missing file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return hex64(fnv1a(buf.str()));
}

namespace {

// Round-trip text for a double; empty for NaN.
std::string cell(double v) {
    if (std::isnan(v)) return "";
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

}  // namespace

void write_metrics_header(std::ostream& out) {
    out << "# ksc-metrics v" << kMetricsVersion << "\n";
    out << "episode,stage,k,return_partial,r_true,r_model,loss_q,loss_pi,spread,innovation,true_norm\n";
}

void write_metrics_rows(std::ostream& out, const EpisodeRecord& record) {
    double partial = 0.0;
    const std::string stage = to_string(record.stage);
    for (const StepRecord& s : record.steps) {
        if (s.k >= record.control_start) partial += s.r_true;
        out << record.episode << ',' << stage << ',' << s.k << ',' << cell(partial) << ',' << cell(s.r_true) << ','
            << cell(s.r_model) << ',' << cell(s.loss_q) << ',' << cell(s.loss_pi) << ',' << cell(s.spread) << ','
            << cell(s.innovation) << ',' << cell(s.true_norm) << '\n';
    }
}

void write_trajectory(const EpisodeRecord& record, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const Eigen::Index n_a = record.steps.empty() ? 0 : record.steps.front().action.size();
    const Eigen::Index grid = record.true_fields.rows();
    out << "# ksc-trajectory v" << kTrajectoryVersion << " episode=" << record.episode
        << " stage=" << to_string(record.stage) << " return=" << cell(record.total_return) << "\n";
    out << "k,r_true,r_model,true_norm";
    for (Eigen::Index i = 0; i < n_a; ++i) out << ",a" << i;
    for (Eigen::Index i = 0; i < grid; ++i) out << ",u" << i;
    for (Eigen::Index i = 0; i < grid; ++i) out << ",u_est" << i;
    out << "\n";
    for (std::size_t n = 0; n < record.steps.size(); ++n) {
        const StepRecord& s = record.steps[n];
        out << s.k << ',' << cell(s.r_true) << ',' << cell(s.r_model) << ',' << cell(s.true_norm);
        for (Eigen::Index i = 0; i < n_a; ++i) out << ',' << cell(s.action[i]);
        for (Eigen::Index i = 0; i < grid; ++i) out << ',' << cell(record.true_fields(i, s.k));
        for (Eigen::Index i = 0; i < grid; ++i) out << ',' << cell(record.estimated_fields(i, s.k));
        out << "\n";
    }
}

std::vector<TrajectoryRow> read_trajectory(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("trajectory file not found: " + path.string());
    std::string line;
    std::getline(in, line);
    const std::string expected = "# ksc-trajectory v" + std::to_string(kTrajectoryVersion) + " ";
    if (line.rfind(expected, 0) != 0) throw FormatError("unsupported trajectory file " + path.string());
    std::getline(in, line);  // column names
    std::vector<TrajectoryRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream s(line);
        std::string k, r;
        std::getline(s, k, ',');
        std::getline(s, r, ',');
        rows.push_back({std::stoi(k), std::stod(r)});
    }
    return rows;
}

nlohmann::json episode_summary(const EpisodeRecord& record) {
    return {{"episode", record.episode},       {"stage", to_string(record.stage)},
            {"return", record.total_return},   {"aborted", record.aborted},
            {"abort_reason", record.abort_reason}, {"updates", record.updates},
            {"wall_seconds", record.wall_seconds}};
}

void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
    nlohmann::json outputs = nlohmann::json::array();
    for (const auto& p : m.outputs) {
        nlohmann::json entry{{"path", p.string()}};
        if (std::filesystem::is_regular_file(p)) entry["hash"] = file_hash(p);
        outputs.push_back(entry);
    }
    nlohmann::json j{{"format", "ksc-manifest"},
                     {"version", kManifestVersion},
                     {"command", m.command},
                     {"config_path", m.config_path},
                     {"config_hash", m.config_hash},
                     {"seed", m.seed},
                     {"artifact_versions",
                      {{"dataset", kDatasetVersion},
                       {"esn_checkpoint", kEsnCheckpointVersion},
                       {"agent_checkpoint", kAgentCheckpointVersion},
                       {"metrics", kMetricsVersion},
                       {"trajectory", kTrajectoryVersion},
                       {"summary", kSummaryVersion}}},
                     {"outputs", outputs},
                     {"started", m.started},
                     {"finished", m.finished}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace ksc
