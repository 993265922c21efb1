#include "ksc/config.hpp"

#include "ksc/errors.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace ksc {

Mode parse_mode(const std::string& name) {
    if (name == "model_free") return Mode::model_free;
    if (name == "damirl_fourier") return Mode::damirl_fourier;
    if (name == "damirl_esn") return Mode::damirl_esn;
    throw std::invalid_argument("unknown mode '" + name + "' (expected model_free, damirl_fourier or damirl_esn)");
}

std::string to_string(Mode mode) {
    switch (mode) {
        case Mode::model_free: return "model_free";
        case Mode::damirl_fourier: return "damirl_fourier";
        case Mode::damirl_esn: return "damirl_esn";
    }
    return "unknown";
}

ActuatorLayout ExperimentConfig::actuators() const {
    return ActuatorLayout::equispaced(control.n_a, length(), control.actuator_width);
}

SensorLayout ExperimentConfig::sensors() const {
    return SensorLayout::equispaced(control.n_o, length(), control.sensor_noise);
}

EnvironmentSettings ExperimentConfig::environment() const {
    return EnvironmentSettings{physics.nu, physics.n_f_true, physics.dt, physics.n_fine, actuators()};
}

DatasetSettings ExperimentConfig::dataset() const {
    return DatasetSettings{environment(), esn.dataset_episodes, esn.dataset_steps, physics.spinup_steps,
                           esn.dataset_seed};
}

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("config: " + what);
}

bool even_at_least_4(int n) { return n >= 4 && n % 2 == 0; }

}  // namespace

void validate(const ExperimentConfig& c) {
    require(c.workers >= 1, "workers must be >= 1");
    require(c.physics.nu > 0.0, "physics.nu must be positive");
    require(c.physics.dt > 0.0, "physics.dt must be positive");
    require(even_at_least_4(c.physics.n_f_true), "physics.n_f_true must be even and >= 4");
    require(c.physics.n_fine >= c.physics.n_f_true && c.physics.n_fine % 2 == 0, "physics.n_fine must be even and >= n_f_true");
    require(c.physics.spinup_steps >= 0, "physics.spinup_steps must be >= 0");
    require(even_at_least_4(c.model.n_f) && c.model.n_f <= c.physics.n_f_true, "model.n_f must be even, >= 4 and <= n_f_true");
    require(c.model.members >= 2, "model.members must be >= 2");
    require(c.model.inflation >= 1.0, "model.inflation must be >= 1");
    require(c.model.sigma0 > 0.0, "model.sigma0 must be positive");
    require(c.model.esn_washout >= 0, "model.esn_washout must be >= 0");
    require(c.control.n_a >= 1, "control.n_a must be >= 1");
    require(c.control.actuator_width > 0.0, "control.actuator_width must be positive");
    require(c.control.n_o >= 1, "control.n_o must be >= 1");
    require(c.control.sensor_noise >= 0.0, "control.sensor_noise must be >= 0");
    require(c.control.obs_interval >= 1 && c.control.action_interval >= 1, "intervals must be >= 1");
    require(c.control.action_interval == 1 || c.control.obs_interval % c.control.action_interval == 0,
            "control.action_interval must divide control.obs_interval or equal 1");
    require(c.control.action_penalty >= 0.0, "control.action_penalty must be >= 0");
    require(c.control.rl_grid >= c.model.n_f && c.control.rl_grid % 2 == 0, "control.rl_grid must be even and >= n_f");
    require(c.episodes.length >= 1, "episodes.length must be >= 1");
    require(c.episodes.control_free_steps >= 0 && c.episodes.control_free_steps < c.episodes.length,
            "episodes.control_free_steps must lie in [0, length)");
    require(c.episodes.random >= 0 && c.episodes.training >= 0, "episode counts must be >= 0");
    require(c.episodes.eval_frequency >= 1, "episodes.eval_frequency must be >= 1");
    require(c.episodes.evaluation >= 1, "episodes.evaluation must be >= 1");
    require(!c.agent.hidden.empty(), "agent.hidden must list at least one layer");
    require(c.agent.batch_size >= 1, "agent.batch_size must be >= 1");
    require(c.agent.buffer_capacity >= static_cast<std::size_t>(c.agent.batch_size), "agent.buffer_capacity < batch_size");
    require(c.agent.gamma >= 0.0 && c.agent.gamma <= 1.0, "agent.gamma must lie in [0, 1]");
    require(c.agent.tau >= 0.0 && c.agent.tau <= 1.0, "agent.tau must lie in [0, 1]");
    require(c.agent.exploration_std >= 0.0, "agent.exploration_std must be >= 0");
    validate(c.esn.params);
    require(c.esn.dataset_episodes >= 1 && c.esn.dataset_steps >= 2, "esn dataset size too small");
}

namespace {

// Reads known keys of one JSON object into fields and rejects the rest.
class Section {
public:
    Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw std::invalid_argument("config: '" + name_ + "' must be an object");
    }
    ~Section() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.contains(key)) throw std::invalid_argument("config: unknown field '" + name_ + "." + key + "'");
        }
    }

    template <typename T>
    Section& take(const std::string& key, T& field) {
        seen_.insert(key);
        if (auto it = j_.find(key); it != j_.end()) {
            try {
                field = it->template get<T>();
            } catch (const nlohmann::json::exception&) {
                throw std::invalid_argument("config: field '" + name_ + "." + key + "' has the wrong type");
            }
        }
        return *this;
    }

    const nlohmann::json* child(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

private:
    const nlohmann::json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

}  // namespace

nlohmann::json to_json(const ExperimentConfig& c) {
    const EsnParams& p = c.esn.params;
    return {
        {"format", "ksc-config"},
        {"version", 1},
        {"mode", to_string(c.mode)},
        {"seed", c.seed},
        {"workers", c.workers},
        {"physics",
         {{"nu", c.physics.nu},
          {"dt", c.physics.dt},
          {"n_f_true", c.physics.n_f_true},
          {"n_fine", c.physics.n_fine},
          {"spinup_steps", c.physics.spinup_steps}}},
        {"model",
         {{"n_f", c.model.n_f},
          {"members", c.model.members},
          {"inflation", c.model.inflation},
          {"sigma0", c.model.sigma0},
          {"esn_checkpoint", c.model.esn_checkpoint},
          {"esn_washout", c.model.esn_washout}}},
        {"control",
         {{"n_a", c.control.n_a},
          {"actuator_width", c.control.actuator_width},
          {"n_o", c.control.n_o},
          {"sensor_noise", c.control.sensor_noise},
          {"obs_interval", c.control.obs_interval},
          {"action_interval", c.control.action_interval},
          {"action_penalty", c.control.action_penalty},
          {"rl_grid", c.control.rl_grid}}},
        {"episodes",
         {{"length", c.episodes.length},
          {"control_free_steps", c.episodes.control_free_steps},
          {"random", c.episodes.random},
          {"training", c.episodes.training},
          {"eval_frequency", c.episodes.eval_frequency},
          {"evaluation", c.episodes.evaluation}}},
        {"agent",
         {{"hidden", c.agent.hidden},
          {"actor_learning_rate", c.agent.actor_learning_rate},
          {"critic_learning_rate", c.agent.critic_learning_rate},
          {"gamma", c.agent.gamma},
          {"tau", c.agent.tau},
          {"batch_size", c.agent.batch_size},
          {"buffer_capacity", c.agent.buffer_capacity},
          {"exploration_std", c.agent.exploration_std},
          {"output_init", c.agent.output_init},
          {"gradient_clip", c.agent.gradient_clip}}},
        {"esn",
         {{"reservoir_size", p.reservoir_size},
          {"connectivity", p.connectivity},
          {"leak_rate", p.leak_rate},
          {"spectral_radius", p.spectral_radius},
          {"input_scaling", p.input_scaling},
          {"action_scaling", p.action_scaling},
          {"tikhonov", p.tikhonov},
          {"seed", p.seed},
          {"dataset_episodes", c.esn.dataset_episodes},
          {"dataset_steps", c.esn.dataset_steps},
          {"dataset_seed", c.esn.dataset_seed},
          {"dataset_path", c.esn.dataset_path},
          {"validation_folds", c.esn.validation.folds},
          {"validation_realizations", c.esn.validation.realizations},
          {"validation_fold_length", c.esn.validation.fold_length},
          {"washout", c.esn.validation.washout},
          {"search_budget", c.esn.search_budget}}},
    };
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    {
        Section root(j, "config");
        std::string format = "ksc-config";
        int version = 1;
        std::string mode = to_string(c.mode);
        root.take("format", format).take("version", version).take("mode", mode).take("seed", c.seed).take("workers",
                                                                                                          c.workers);
        if (format != "ksc-config") throw FormatError("not an experiment config (format '" + format + "')");
        if (version != 1) throw FormatError("unsupported config version " + std::to_string(version));
        c.mode = parse_mode(mode);
        if (const auto* s = root.child("physics")) {
            Section(*s, "physics")
                .take("nu", c.physics.nu)
                .take("dt", c.physics.dt)
                .take("n_f_true", c.physics.n_f_true)
                .take("n_fine", c.physics.n_fine)
                .take("spinup_steps", c.physics.spinup_steps);
        }
        if (const auto* s = root.child("model")) {
            Section(*s, "model")
                .take("n_f", c.model.n_f)
                .take("members", c.model.members)
                .take("inflation", c.model.inflation)
                .take("sigma0", c.model.sigma0)
                .take("esn_checkpoint", c.model.esn_checkpoint)
                .take("esn_washout", c.model.esn_washout);
        }
        if (const auto* s = root.child("control")) {
            Section(*s, "control")
                .take("n_a", c.control.n_a)
                .take("actuator_width", c.control.actuator_width)
                .take("n_o", c.control.n_o)
                .take("sensor_noise", c.control.sensor_noise)
                .take("obs_interval", c.control.obs_interval)
                .take("action_interval", c.control.action_interval)
                .take("action_penalty", c.control.action_penalty)
                .take("rl_grid", c.control.rl_grid);
        }
        if (const auto* s = root.child("episodes")) {
            Section(*s, "episodes")
                .take("length", c.episodes.length)
                .take("control_free_steps", c.episodes.control_free_steps)
                .take("random", c.episodes.random)
                .take("training", c.episodes.training)
                .take("eval_frequency", c.episodes.eval_frequency)
                .take("evaluation", c.episodes.evaluation);
        }
        if (const auto* s = root.child("agent")) {
            Section(*s, "agent")
                .take("hidden", c.agent.hidden)
                .take("actor_learning_rate", c.agent.actor_learning_rate)
                .take("critic_learning_rate", c.agent.critic_learning_rate)
                .take("gamma", c.agent.gamma)
                .take("tau", c.agent.tau)
                .take("batch_size", c.agent.batch_size)
                .take("buffer_capacity", c.agent.buffer_capacity)
                .take("exploration_std", c.agent.exploration_std)
                .take("output_init", c.agent.output_init)
                .take("gradient_clip", c.agent.gradient_clip);
        }
        if (const auto* s = root.child("esn")) {
            EsnParams& p = c.esn.params;
            Section(*s, "esn")
                .take("reservoir_size", p.reservoir_size)
                .take("connectivity", p.connectivity)
                .take("leak_rate", p.leak_rate)
                .take("spectral_radius", p.spectral_radius)
                .take("input_scaling", p.input_scaling)
                .take("action_scaling", p.action_scaling)
                .take("tikhonov", p.tikhonov)
                .take("seed", p.seed)
                .take("dataset_episodes", c.esn.dataset_episodes)
                .take("dataset_steps", c.esn.dataset_steps)
                .take("dataset_seed", c.esn.dataset_seed)
                .take("dataset_path", c.esn.dataset_path)
                .take("validation_folds", c.esn.validation.folds)
                .take("validation_realizations", c.esn.validation.realizations)
                .take("validation_fold_length", c.esn.validation.fold_length)
                .take("washout", c.esn.validation.washout)
                .take("search_budget", c.esn.search_budget);
        }
    }
    validate(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config file not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << to_json(config).dump(2) << "\n";
}

}  // namespace ksc
