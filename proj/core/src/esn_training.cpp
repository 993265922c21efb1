#include "ksc/esn_training.hpp"

#include "ksc/errors.hpp"
#include "ksc/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace ksc {

namespace {

constexpr std::array<char, 8> kDatasetMagic{'K', 'S', 'C', 'D', 'A', 'T', 'A', '\0'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw FormatError("unexpected end of file");
    return value;
}

std::mt19937_64 seeded(std::uint64_t seed, std::uint32_t a, std::uint32_t b = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), a, b};
    return std::mt19937_64(seq);
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(kDatasetMagic.data(), kDatasetMagic.size());
    write_pod(out, kDatasetVersion);
    write_pod(out, static_cast<std::uint32_t>(dataset.n_u));
    write_pod(out, static_cast<std::uint32_t>(dataset.n_a));
    write_pod(out, static_cast<std::uint32_t>(dataset.episodes()));
    write_pod(out, static_cast<std::uint32_t>(dataset.episode_length));
    write_pod(out, dataset.dt);
    write_pod(out, dataset.nu);
    std::vector<double> row(dataset.n_u + dataset.n_a);
    for (int e = 0; e < dataset.episodes(); ++e) {
        for (int k = 0; k < dataset.episode_length; ++k) {
            for (int i = 0; i < dataset.n_u; ++i) row[i] = dataset.states[e](i, k);
            for (int i = 0; i < dataset.n_a; ++i) row[dataset.n_u + i] = dataset.actions[e](i, k);
            out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
        }
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("dataset file not found: " + path.string());
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kDatasetMagic) throw FormatError(path.string() + " is not a dataset file");
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kDatasetVersion) {
        throw FormatError("dataset version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kDatasetVersion) + ")");
    }
    Dataset d;
    d.n_u = static_cast<int>(read_pod<std::uint32_t>(in));
    d.n_a = static_cast<int>(read_pod<std::uint32_t>(in));
    const auto episodes = read_pod<std::uint32_t>(in);
    d.episode_length = static_cast<int>(read_pod<std::uint32_t>(in));
    d.dt = read_pod<double>(in);
    d.nu = read_pod<double>(in);
    std::vector<double> row(d.n_u + d.n_a);
    for (std::uint32_t e = 0; e < episodes; ++e) {
        Eigen::MatrixXd u(d.n_u, d.episode_length);
        Eigen::MatrixXd a(d.n_a, d.episode_length);
        for (int k = 0; k < d.episode_length; ++k) {
            in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
            if (!in) throw FormatError("truncated dataset file " + path.string());
            for (int i = 0; i < d.n_u; ++i) u(i, k) = row[i];
            for (int i = 0; i < d.n_a; ++i) a(i, k) = row[d.n_u + i];
        }
        d.states.push_back(std::move(u));
        d.actions.push_back(std::move(a));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in dataset file");
    return d;
}

Dataset generate_dataset(const DatasetSettings& settings, int workers) {
    if (settings.episodes < 1 || settings.steps < 1) throw std::invalid_argument("dataset needs episodes and steps");
    const KsEnvironment env(settings.environment);
    const int n_u = settings.environment.n_f;
    const int n_a = static_cast<int>(settings.environment.actuators.size());
    Dataset d;
    d.n_u = n_u;
    d.n_a = n_a;
    d.dt = settings.environment.dt;
    d.nu = settings.environment.nu;
    d.episode_length = settings.steps;
    d.states.resize(settings.episodes);
    d.actions.resize(settings.episodes);
    parallel_for(static_cast<std::size_t>(settings.episodes), workers, [&](std::size_t e) {
        auto rng = seeded(settings.seed, 7, static_cast<std::uint32_t>(e));
        SpectralState state = env.init(rng(), settings.spinup_steps);
        std::uniform_real_distribution<double> uniform(-1.0, 1.0);
        Eigen::MatrixXd u(n_u, settings.steps);
        Eigen::MatrixXd a(n_a, settings.steps);
        for (int k = 0; k < settings.steps; ++k) {
            u.col(k) = to_physical_grid(state, n_u);
            for (int i = 0; i < n_a; ++i) a(i, k) = uniform(rng);
            state = env.step(state, Action(a.col(k)));
        }
        d.states[e] = std::move(u);
        d.actions[e] = std::move(a);
    });
    return d;
}

DatasetSplit split_dataset(int episodes, double train_fraction, double validation_fraction) {
    const int n_train = static_cast<int>(std::lround(episodes * train_fraction));
    const int n_val = static_cast<int>(std::lround(episodes * validation_fraction));
    if (n_train < 1 || n_train + n_val > episodes) throw std::invalid_argument("invalid dataset split");
    DatasetSplit s;
    for (int e = 0; e < episodes; ++e) {
        if (e < n_train) {
            s.train.push_back(e);
        } else if (e < n_train + n_val) {
            s.validation.push_back(e);
        } else {
            s.test.push_back(e);
        }
    }
    return s;
}

double relative_l2_error(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& prediction) {
    if (truth.rows() != prediction.rows() || truth.cols() != prediction.cols()) {
        throw std::invalid_argument("error operands differ in shape");
    }
    const double norm = truth.squaredNorm();
    if (norm == 0.0) throw std::invalid_argument("relative error of a zero signal");
    return std::sqrt((truth - prediction).squaredNorm() / norm);
}

namespace {

// Teacher-forced reservoir states h_1..h_N for inputs columns 0..N-1.
Eigen::MatrixXd drive_open_loop(const EsnMachine& machine, const Eigen::MatrixXd& u, const Eigen::MatrixXd& a) {
    Eigen::MatrixXd y(machine.n_u() + machine.n_a(), u.cols());
    y.topRows(machine.n_u()) = (u.colwise() - machine.input_mean()).array().colwise() / machine.input_std().array();
    y.bottomRows(machine.n_a()) = a;
    Eigen::MatrixXd drive = machine.input_weights() * y;
    drive.colwise() += machine.bias();
    const double alpha = machine.params().leak_rate;
    Eigen::MatrixXd h(machine.reservoir_size(), u.cols());
    Eigen::VectorXd state = Eigen::VectorXd::Zero(machine.reservoir_size());
    for (Eigen::Index k = 0; k < u.cols(); ++k) {
        const Eigen::VectorXd pre = drive.col(k) + machine.reservoir_weights() * state;
        state = (1.0 - alpha) * state + alpha * pre.array().tanh().matrix();
        h.col(k) = state;
    }
    return h;
}

}  // namespace

EsnMachine train_esn(const EsnParams& params, const Dataset& dataset, const std::vector<int>& episodes, int washout,
                     TrainingReport* report) {
    if (episodes.empty()) throw std::invalid_argument("no training episodes");
    if (washout < 0 || washout + 1 >= dataset.episode_length) throw std::invalid_argument("washout exceeds episode");
    EsnMachine machine = EsnMachine::generate(params, dataset.n_u, dataset.n_a);

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dataset.n_u);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(dataset.n_u);
    long count = 0;
    for (int e : episodes) {
        const Eigen::MatrixXd& u = dataset.states.at(e);
        mean += u.rowwise().sum();
        sq += u.array().square().matrix().rowwise().sum();
        count += u.cols();
    }
    mean /= static_cast<double>(count);
    const Eigen::VectorXd var = (sq / static_cast<double>(count) - mean.cwiseAbs2()).cwiseMax(0.0);
    machine.set_normalization(mean, var.cwiseSqrt());

    RidgeAccumulator acc(params.reservoir_size, dataset.n_u);
    const int n = dataset.episode_length - 1;
    for (int e : episodes) {
        const Eigen::MatrixXd h = drive_open_loop(machine, dataset.states[e].leftCols(n), dataset.actions[e].leftCols(n));
        // h.col(k) = h_{k+1}, predicting u_{k+1}.
        acc.add(h.rightCols(n - washout), dataset.states[e].rightCols(n - washout));
    }
    machine.set_readout(acc.solve(params.tikhonov));
    if (report) report->samples = acc.samples();
    return machine;
}

double closed_loop_error(const EsnMachine& machine, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                         int start, int horizon, int washout) {
    if (start < washout || start + horizon >= states.cols() || horizon < 1) {
        throw std::invalid_argument("closed-loop window outside the episode");
    }
    Eigen::VectorXd h = Eigen::VectorXd::Zero(machine.reservoir_size());
    for (int t = start - washout; t <= start; ++t) {
        h = esn_step(h, augment_input(states.col(t), actions.col(t).eval(), machine), machine);
    }
    Eigen::MatrixXd prediction(machine.n_u(), horizon);
    prediction.col(0) = readout(h, machine);
    for (int k = 1; k < horizon; ++k) {
        h = esn_step(h, augment_input(prediction.col(k - 1), actions.col(start + k).eval(), machine), machine);
        prediction.col(k) = readout(h, machine);
    }
    return relative_l2_error(states.middleCols(start + 1, horizon), prediction);
}

double evaluate_machine(const EsnMachine& machine, const Dataset& dataset, const std::vector<int>& episodes,
                        const ValidationSettings& settings) {
    if (episodes.empty()) throw std::invalid_argument("no episodes to evaluate on");
    if (settings.folds < 1) throw std::invalid_argument("folds must be >= 1");
    const int last_start = dataset.episode_length - settings.fold_length - 1;
    if (last_start < settings.washout) throw std::invalid_argument("fold length exceeds the episode");
    auto rng = seeded(settings.seed, 11);
    std::uniform_int_distribution<int> start(settings.washout, last_start);
    double total = 0.0;
    int count = 0;
    for (int e : episodes) {
        for (int f = 0; f < settings.folds; ++f) {
            total += closed_loop_error(machine, dataset.states.at(e), dataset.actions.at(e), start(rng),
                                       settings.fold_length, settings.washout);
            ++count;
        }
    }
    return total / count;
}

double validate_esn(const EsnParams& params, const Dataset& dataset, const DatasetSplit& split,
                    const ValidationSettings& settings) {
    if (split.validation.empty()) throw std::invalid_argument("no validation episodes");
    if (settings.realizations < 1) throw std::invalid_argument("realizations must be >= 1");
    double total = 0.0;
    for (int r = 0; r < settings.realizations; ++r) {
        EsnParams p = params;
        p.seed = params.seed + static_cast<std::uint64_t>(r);
        total += evaluate_machine(train_esn(p, dataset, split.train, settings.washout), dataset, split.validation,
                                  settings);
    }
    return total / settings.realizations;
}

namespace {

double sample_in(const SearchRange& r, std::mt19937_64& rng) {
    if (r.low == r.high) return r.low;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (r.log_scale) return std::exp(std::log(r.low) + u(rng) * (std::log(r.high) - std::log(r.low)));
    return r.low + u(rng) * (r.high - r.low);
}

double perturb_in(const SearchRange& r, double value, std::mt19937_64& rng) {
    if (r.low == r.high) return r.low;
    std::normal_distribution<double> n(0.0, 0.15);
    if (r.log_scale) {
        const double span = std::log(r.high) - std::log(r.low);
        return std::clamp(std::exp(std::log(value) + n(rng) * span), r.low, r.high);
    }
    return std::clamp(value + n(rng) * (r.high - r.low), r.low, r.high);
}

}  // namespace

SearchResult search_hyperparams(const EsnParams& base, const SearchRanges& ranges, int budget, const Dataset& dataset,
                                const DatasetSplit& split, const ValidationSettings& validation, std::uint64_t seed,
                                int workers) {
    if (budget < 1) throw std::invalid_argument("search budget must be >= 1");
    for (const SearchRange* r : {&ranges.leak_rate, &ranges.spectral_radius, &ranges.input_scaling,
                                 &ranges.action_scaling, &ranges.tikhonov}) {
        if (r->low > r->high || (r->log_scale && !(r->low > 0.0))) throw std::invalid_argument("invalid search range");
    }
    auto rng = seeded(seed, 13);
    SearchResult result;
    auto evaluate_batch = [&](std::vector<EsnParams> batch) {
        std::vector<double> errors(batch.size());
        parallel_for(batch.size(), workers,
                     [&](std::size_t i) { errors[i] = validate_esn(batch[i], dataset, split, validation); });
        for (std::size_t i = 0; i < batch.size(); ++i) {
            std::clog << "[esn-search] alpha=" << batch[i].leak_rate << " rho=" << batch[i].spectral_radius
                      << " xi_u=" << batch[i].input_scaling << " xi_a=" << batch[i].action_scaling
                      << " lambda=" << batch[i].tikhonov << " error=" << errors[i] << "\n";
            if (result.history.empty() || errors[i] < result.best_error) {
                result.best = batch[i];
                result.best_error = errors[i];
            }
            result.history.emplace_back(batch[i], errors[i]);
        }
    };

    const int explore = budget == 1 ? 1 : (budget + 1) / 2;
    std::vector<EsnParams> batch;
    for (int i = 0; i < explore; ++i) {
        EsnParams p = base;
        p.leak_rate = sample_in(ranges.leak_rate, rng);
        p.spectral_radius = sample_in(ranges.spectral_radius, rng);
        p.input_scaling = sample_in(ranges.input_scaling, rng);
        p.action_scaling = sample_in(ranges.action_scaling, rng);
        p.tikhonov = sample_in(ranges.tikhonov, rng);
        batch.push_back(p);
    }
    evaluate_batch(std::move(batch));
    for (int i = explore; i < budget; ++i) {
        EsnParams p = result.best;
        p.leak_rate = perturb_in(ranges.leak_rate, p.leak_rate, rng);
        p.spectral_radius = perturb_in(ranges.spectral_radius, p.spectral_radius, rng);
        p.input_scaling = perturb_in(ranges.input_scaling, p.input_scaling, rng);
        p.action_scaling = perturb_in(ranges.action_scaling, p.action_scaling, rng);
        p.tikhonov = perturb_in(ranges.tikhonov, p.tikhonov, rng);
        evaluate_batch({p});
    }
    return result;
}

void save_esn(const EsnMachine& machine, const std::filesystem::path& path) {
    if (!machine.trained()) throw std::logic_error("cannot checkpoint an untrained ESN");
    const EsnParams& p = machine.params();
    const Eigen::MatrixXd& w = machine.readout_weights();
    nlohmann::json j;
    j["format"] = "ksc-esn";
    j["version"] = kEsnCheckpointVersion;
    j["params"] = {{"reservoir_size", p.reservoir_size}, {"connectivity", p.connectivity},
                   {"leak_rate", p.leak_rate},           {"spectral_radius", p.spectral_radius},
                   {"input_scaling", p.input_scaling},   {"action_scaling", p.action_scaling},
                   {"tikhonov", p.tikhonov},             {"seed", p.seed}};
    j["n_u"] = machine.n_u();
    j["n_a"] = machine.n_a();
    j["input_mean"] = std::vector<double>(machine.input_mean().begin(), machine.input_mean().end());
    j["input_std"] = std::vector<double>(machine.input_std().begin(), machine.input_std().end());
    std::vector<double> data;
    data.reserve(w.size());
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) data.push_back(w(r, c));
    }
    j["readout"] = {{"rows", w.rows()}, {"cols", w.cols()}, {"data", data}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump() << "\n";
}

EsnMachine load_esn(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ESN checkpoint not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed ESN checkpoint: " + std::string(e.what()));
    }
    if (j.value("format", "") != "ksc-esn") throw FormatError(path.string() + " is not an ESN checkpoint");
    if (j.value("version", -1) != kEsnCheckpointVersion) throw FormatError("unsupported ESN checkpoint version");
    try {
        const auto& jp = j.at("params");
        EsnParams p;
        p.reservoir_size = jp.at("reservoir_size").get<int>();
        p.connectivity = jp.at("connectivity").get<double>();
        p.leak_rate = jp.at("leak_rate").get<double>();
        p.spectral_radius = jp.at("spectral_radius").get<double>();
        p.input_scaling = jp.at("input_scaling").get<double>();
        p.action_scaling = jp.at("action_scaling").get<double>();
        p.tikhonov = jp.at("tikhonov").get<double>();
        p.seed = jp.at("seed").get<std::uint64_t>();
        EsnMachine machine = EsnMachine::generate(p, j.at("n_u").get<int>(), j.at("n_a").get<int>());
        const auto mean = j.at("input_mean").get<std::vector<double>>();
        const auto sd = j.at("input_std").get<std::vector<double>>();
        machine.set_normalization(Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size())),
                                  Eigen::Map<const Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size())));
        const auto rows = j.at("readout").at("rows").get<Eigen::Index>();
        const auto cols = j.at("readout").at("cols").get<Eigen::Index>();
        const auto data = j.at("readout").at("data").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw FormatError("readout size mismatch");
        machine.set_readout(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            data.data(), rows, cols));
        return machine;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed ESN checkpoint: " + std::string(e.what()));
    }
}

}  // namespace ksc
