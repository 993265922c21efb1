#pragma once

#include "ksc/ddpg.hpp"
#include "ksc/environment.hpp"
#include "ksc/esn_training.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace ksc {

enum class Mode { model_free, damirl_fourier, damirl_esn };

Mode parse_mode(const std::string& name);
std::string to_string(Mode mode);

struct PhysicsConfig {
    double nu = 0.08;
    double dt = 0.05;
    int n_f_true = 64;
    int n_fine = 256;
    int spinup_steps = 1000;
};

struct ModelConfig {
    int n_f = 16;
    int members = 50;
    double inflation = 1.02;
    double sigma0 = 0.25;
    std::string esn_checkpoint = "esn.json";
    int esn_washout = 100;
};

struct ControlConfig {
    int n_a = 8;
    double actuator_width = 0.4;
    int n_o = 4;
    double sensor_noise = 0.1;
    int obs_interval = 10;    // Delta k_o
    int action_interval = 1;  // Delta k_a
    double action_penalty = 0.1;
    int rl_grid = 64;
};

struct EpisodeConfig {
    int length = 1000;             // k_ep
    int control_free_steps = 500;  // k_start
    int random = 5;
    int training = 95;
    int eval_frequency = 5;
    int evaluation = 20;
};

struct EsnConfig {
    EsnParams params;
    int dataset_episodes = 50;
    int dataset_steps = 1500;
    std::uint64_t dataset_seed = 1;
    std::string dataset_path = "dataset.bin";
    ValidationSettings validation;
    int search_budget = 60;
};

/// Everything one run needs. Defaults are the nu = 0.08 Fourier setting.
struct ExperimentConfig {
    Mode mode = Mode::damirl_fourier;
    std::uint64_t seed = 0;
    int workers = 1;
    PhysicsConfig physics;
    ModelConfig model;
    ControlConfig control;
    EpisodeConfig episodes;
    DdpgSettings agent;
    EsnConfig esn;

    double length() const { return domain_length(physics.nu); }
    ActuatorLayout actuators() const;
    SensorLayout sensors() const;
    EnvironmentSettings environment() const;
    DatasetSettings dataset() const;
};

/// Throws std::invalid_argument naming the offending field.
void validate(const ExperimentConfig& config);

nlohmann::json to_json(const ExperimentConfig& config);
/// Missing fields keep their defaults; unknown fields are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

}  // namespace ksc
