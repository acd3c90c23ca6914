#include "mixconf/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "mixconf/calibration.hpp"

namespace mixconf {

namespace {

using nlohmann::json;

std::uint64_t stream(std::uint64_t master, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t s = master;
    for (std::uint64_t p : parts) s = derive_seed(s, p);
    return s;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation; zero for fewer than two observations.
double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string join_doubles(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
    return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad numeric value for '" + key + "': " + v);
    }
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long n = std::stoll(v, &pos);
        if (pos != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad integer value for '" + key + "': " + v);
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad boolean value for '" + key + "': " + v);
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& item : split_list(v)) out.push_back(parse_double(key, item));
    return out;
}

AugmentorChoice parse_augmentor(const std::string& v) {
    AugmentorChoice c;
    if (v == "none")
        c.kind = AugmentorChoice::Kind::None;
    else if (v == "mixup")
        c.kind = AugmentorChoice::Kind::Mixup;
    else if (v == "mixconf_g")
        c.kind = AugmentorChoice::Kind::MixConfG;
    else if (v == "mixconf_t")
        c.kind = AugmentorChoice::Kind::MixConfT;
    else
        throw std::invalid_argument("config: unknown augmentor '" + v + "'");
    return c;
}

std::string kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Calibrate: return "calibrate";
        case ExperimentKind::SslTrain: return "ssl";
        case ExperimentKind::ThresholdSweep: return "sweep-threshold";
        case ExperimentKind::LambdaDiagnostics: return "lambda-diag";
    }
    return "?";
}

ExperimentKind parse_kind(const std::string& v) {
    if (v == "calibrate") return ExperimentKind::Calibrate;
    if (v == "ssl") return ExperimentKind::SslTrain;
    if (v == "sweep-threshold") return ExperimentKind::ThresholdSweep;
    if (v == "lambda-diag") return ExperimentKind::LambdaDiagnostics;
    throw std::invalid_argument("config: unknown kind '" + v + "'");
}

}  // namespace

std::string AugmentorChoice::name() const {
    switch (kind) {
        case Kind::None: return "none";
        case Kind::Mixup: return "mixup";
        case Kind::MixConfG: return "mixconf_g";
        case Kind::MixConfT: return "mixconf_t";
    }
    return "?";
}

AugmentorConfig AugmentorChoice::to_augmentor(double param) const {
    AugmentorConfig cfg;
    switch (kind) {
        case Kind::None:
            throw std::invalid_argument("augmentor 'none' has no mixing rule");
        case Kind::Mixup:
            cfg.kind = AugmentorConfig::Kind::Mixup;
            cfg.alpha = param;
            break;
        case Kind::MixConfG:
            cfg.kind = AugmentorConfig::Kind::MixConf;
            cfg.kernel = {KernelFamily::Gaussian, param};
            break;
        case Kind::MixConfT:
            cfg.kind = AugmentorConfig::Kind::MixConf;
            cfg.kernel = {KernelFamily::Triangular, param};
            break;
    }
    return cfg;
}

void ExperimentConfig::validate() const {
    dataset.validate();
    if (repeats == 0) throw std::invalid_argument("config: repeats must be >= 1");
    if (augmentors.empty()) throw std::invalid_argument("config: need at least one augmentor");
    if (hidden.empty()) throw std::invalid_argument("config: need at least one hidden layer size");
    if (!(ema_decay >= 0.0 && ema_decay < 1.0))
        throw std::invalid_argument("config: ema_decay must be in [0,1)");
    for (double p : proportions)
        if (!(p > 0.0 && p <= 1.0))
            throw std::invalid_argument("config: proportions must be in (0,1]");
    for (double t : thresholds)
        if (!(t > 0.0 && t <= 1.0))
            throw std::invalid_argument("config: thresholds must be in (0,1]");
    if (kind == ExperimentKind::SslTrain || kind == ExperimentKind::ThresholdSweep) {
        ssl.validate();
        if (split.n_labeled == 0) throw std::invalid_argument("config: n_labeled must be positive");
    }
    if (kind == ExperimentKind::Calibrate && proportions.empty())
        throw std::invalid_argument("config: calibrate needs a proportion ladder");
    if (kind == ExperimentKind::ThresholdSweep && thresholds.empty())
        throw std::invalid_argument("config: sweep-threshold needs threshold values");
    if (kind == ExperimentKind::LambdaDiagnostics) {
        if (diag_draws == 0 || diag_bins == 0)
            throw std::invalid_argument("config: diag_draws and diag_bins must be positive");
        const auto k = augmentors.front().kind;
        if (k != AugmentorChoice::Kind::MixConfG && k != AugmentorChoice::Kind::MixConfT)
            throw std::invalid_argument("config: lambda-diag needs a mixconf augmentor");
    }
}

std::map<std::string, std::string> ExperimentConfig::echo() const {
    std::map<std::string, std::string> m;
    m["kind"] = kind_name(kind);
    m["dataset"] = dataset.generator == Generator::TwoMoons ? "two_moons" : "gaussian_blobs";
    m["n_samples"] = std::to_string(dataset.n_samples);
    m["noise_sd"] = fmt(dataset.noise_sd);
    m["n_classes"] = std::to_string(dataset.n_classes);
    m["n_labeled"] = std::to_string(split.n_labeled);
    m["n_validation"] = std::to_string(split.n_validation);
    m["n_test"] = std::to_string(split.n_test);
    std::string arms;
    for (std::size_t i = 0; i < augmentors.size(); ++i) arms += (i ? "," : "") + augmentors[i].name();
    m["augmentors"] = arms;
    m["alpha"] = fmt(augmentors.front().alpha);
    m["sigma"] = fmt(augmentors.front().sigma);
    m["batch_labeled"] = std::to_string(ssl.batch_labeled);
    m["c_thr"] = fmt(ssl.c_thr);
    m["lambda_u"] = fmt(ssl.lambda_u);
    m["k_augment"] = std::to_string(ssl.k_augment);
    m["iterations"] = std::to_string(ssl.iterations);
    m["learn_rate"] = fmt(ssl.learn_rate);
    m["jitter_sd"] = fmt(ssl.jitter_sd);
    m["small_loss_selection"] = ssl.small_loss_selection ? "on" : "off";
    m["eval_every"] = std::to_string(ssl.eval_every);
    m["hidden"] = join_sizes(hidden);
    m["activation"] = activation == Activation::ReLU ? "relu" : "tanh";
    m["ema_decay"] = fmt(ema_decay);
    m["repeats"] = std::to_string(repeats);
    m["seed"] = std::to_string(seed);
    m["out"] = out_path;
    m["step_log"] = step_log_prefix;
    m["proportions"] = join_doubles(proportions);
    m["supervised_iterations"] = std::to_string(supervised_iterations);
    m["supervised_batch"] = std::to_string(supervised_batch);
    m["thresholds"] = join_doubles(thresholds);
    m["diag_draws"] = std::to_string(diag_draws);
    m["diag_bins"] = std::to_string(diag_bins);
    return m;
}

ExperimentConfig default_config(ExperimentKind kind) {
    ExperimentConfig cfg;
    cfg.kind = kind;
    switch (kind) {
        case ExperimentKind::Calibrate:
            // Heavily overlapping blobs plus a roomy net: small training
            // subsets then produce the overconfidence that mixing is meant
            // to correct.
            cfg.dataset = {Generator::GaussianBlobs, 2000, 0.5, 4, 0};
            cfg.split = {0, 200, 500};  // n_labeled comes from the proportion ladder
            cfg.hidden = {64, 64};
            cfg.supervised_iterations = 3000;
            cfg.augmentors = {parse_augmentor("none"), parse_augmentor("mixconf_g")};
            cfg.repeats = 10;
            cfg.out_path = "calibrate_report.json";
            break;
        case ExperimentKind::SslTrain:
        case ExperimentKind::ThresholdSweep:
            // Tuned two-moons protocol: a roomy net overfits the 10 labeled
            // points, which is exactly the regime where the unlabeled data
            // pays off; the narrow kernel keeps mixed samples near their
            // sources so interpolations respect the curved clusters.
            cfg.dataset = {Generator::TwoMoons, 2000, 0.12, 2, 0};
            cfg.split = {10, 0, 500};
            cfg.hidden = {96, 96, 96};
            cfg.augmentors = {parse_augmentor("mixconf_g")};
            cfg.augmentors.front().sigma = 0.2;
            cfg.repeats = 5;
            cfg.ssl.c_thr = 0.95;
            cfg.ssl.jitter_sd = 0.1;
            cfg.ssl.augmentor =
                cfg.augmentors.front().to_augmentor(cfg.augmentors.front().sigma);
            cfg.ssl.eval_every = 500;
            cfg.out_path = kind == ExperimentKind::SslTrain ? "ssl_report.json"
                                                            : "threshold_sweep.csv";
            break;
        case ExperimentKind::LambdaDiagnostics:
            cfg.augmentors = {parse_augmentor("mixconf_g")};
            cfg.out_path = "lambda_diag.csv";
            break;
    }
    return cfg;
}

void apply_override(ExperimentConfig& c, const std::string& key, const std::string& value) {
    if (key == "kind") {
        const ExperimentKind k = parse_kind(value);
        if (k != c.kind)
            throw std::invalid_argument("config: kind '" + value + "' does not match the subcommand '" +
                                        kind_name(c.kind) + "'");
    } else if (key == "dataset") {
        if (value == "two_moons") c.dataset.generator = Generator::TwoMoons;
        else if (value == "gaussian_blobs") c.dataset.generator = Generator::GaussianBlobs;
        else throw std::invalid_argument("config: unknown dataset '" + value + "'");
    } else if (key == "n_samples") c.dataset.n_samples = parse_size(key, value);
    else if (key == "noise_sd") c.dataset.noise_sd = parse_double(key, value);
    else if (key == "n_classes") c.dataset.n_classes = parse_size(key, value);
    else if (key == "n_labeled") c.split.n_labeled = parse_size(key, value);
    else if (key == "n_validation") c.split.n_validation = parse_size(key, value);
    else if (key == "n_test") c.split.n_test = parse_size(key, value);
    else if (key == "augmentor" || key == "augmentors") {
        c.augmentors.clear();
        for (const auto& item : split_list(value)) c.augmentors.push_back(parse_augmentor(item));
        if (c.augmentors.empty()) throw std::invalid_argument("config: empty augmentor list");
    } else if (key == "alpha") {
        for (auto& a : c.augmentors) a.alpha = parse_double(key, value);
    } else if (key == "sigma") {
        for (auto& a : c.augmentors) a.sigma = parse_double(key, value);
    } else if (key == "alpha_grid") {
        for (auto& a : c.augmentors)
            if (a.kind == AugmentorChoice::Kind::Mixup) a.param_grid = parse_double_list(key, value);
    } else if (key == "sigma_grid") {
        for (auto& a : c.augmentors)
            if (a.kind == AugmentorChoice::Kind::MixConfG || a.kind == AugmentorChoice::Kind::MixConfT)
                a.param_grid = parse_double_list(key, value);
    } else if (key == "batch_labeled") c.ssl.batch_labeled = parse_size(key, value);
    else if (key == "c_thr") c.ssl.c_thr = parse_double(key, value);
    else if (key == "lambda_u") c.ssl.lambda_u = parse_double(key, value);
    else if (key == "k_augment") c.ssl.k_augment = parse_size(key, value);
    else if (key == "iterations") c.ssl.iterations = parse_size(key, value);
    else if (key == "learn_rate") c.ssl.learn_rate = parse_double(key, value);
    else if (key == "jitter_sd") c.ssl.jitter_sd = parse_double(key, value);
    else if (key == "small_loss_selection") c.ssl.small_loss_selection = parse_bool(key, value);
    else if (key == "eval_every") c.ssl.eval_every = parse_size(key, value);
    else if (key == "hidden") {
        c.hidden.clear();
        for (const auto& item : split_list(value)) c.hidden.push_back(parse_size(key, item));
    } else if (key == "activation") {
        if (value == "relu") c.activation = Activation::ReLU;
        else if (value == "tanh") c.activation = Activation::Tanh;
        else throw std::invalid_argument("config: unknown activation '" + value + "'");
    } else if (key == "ema_decay") c.ema_decay = parse_double(key, value);
    else if (key == "repeats") c.repeats = parse_size(key, value);
    else if (key == "seed") c.seed = parse_size(key, value);
    else if (key == "out") c.out_path = value;
    else if (key == "step_log") c.step_log_prefix = value;
    else if (key == "proportions") c.proportions = parse_double_list(key, value);
    else if (key == "supervised_iterations") c.supervised_iterations = parse_size(key, value);
    else if (key == "supervised_batch") c.supervised_batch = parse_size(key, value);
    else if (key == "thresholds") c.thresholds = parse_double_list(key, value);
    else if (key == "diag_draws") c.diag_draws = parse_size(key, value);
    else if (key == "diag_bins") c.diag_bins = parse_size(key, value);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

ExperimentConfig parse_config_file(const std::string& path, ExperimentKind kind) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    ExperimentConfig cfg = default_config(kind);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not 'key = value': " + line);
        apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

namespace {

// Resolved per-repeat problem instance shared by both arms of a comparison.
struct RepeatData {
    SplitResult splits;
    std::uint64_t net_seed = 0;
    std::uint64_t train_seed = 0;
};

RepeatData make_repeat(const ExperimentConfig& cfg, const SplitSpec& split_spec, std::size_t r) {
    DatasetSpec ds = cfg.dataset;
    ds.seed = stream(cfg.seed, {1, r});
    const Dataset dataset = generate(ds);
    RepeatData out;
    out.splits = split(dataset, split_spec, stream(cfg.seed, {2, r}));
    out.net_seed = stream(cfg.seed, {3, r});
    out.train_seed = stream(cfg.seed, {4, r});
    return out;
}

NetConfig make_net_config(const ExperimentConfig& cfg, std::size_t input_dim,
                          std::uint64_t net_seed) {
    NetConfig nc;
    nc.layer_sizes.push_back(input_dim);
    for (std::size_t h : cfg.hidden) nc.layer_sizes.push_back(h);
    nc.layer_sizes.push_back(cfg.dataset.n_classes);
    nc.activation = cfg.activation;
    nc.seed = net_seed;
    nc.ema_decay = cfg.ema_decay;
    return nc;
}

json echo_json(const ExperimentConfig& cfg) {
    json j = json::object();
    for (const auto& [k, v] : cfg.echo()) j[k] = v;
    return j;
}

void write_text(const std::string& path, const std::string& body) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("report: cannot open " + path);
    os << body;
    if (!os) throw std::runtime_error("report: write failed for " + path);
}

struct SslRunResult {
    double test_error = 0.0;
    double test_ece = 0.0;
    double final_train_loss = 0.0;
};

// One full SSL training run; the test set is evaluated with the EMA shadow.
SslRunResult run_ssl_once(const ExperimentConfig& cfg, const SslConfig& ssl,
                          const RepeatData& rep, const std::string& log_path = "") {
    NetState net = NetState::init(make_net_config(cfg, rep.splits.labeled.x.cols(), rep.net_seed));
    Rng rng(rep.train_seed);
    const auto log = train_loop(net, rep.splits.labeled, rep.splits.unlabeled_x, ssl, rng,
                                &rep.splits.test);
    if (!log_path.empty())
        write_step_log_csv(log, log_path,
                           {{"seed", std::to_string(cfg.seed)},
                            {"net_seed", std::to_string(rep.net_seed)},
                            {"c_thr", fmt(ssl.c_thr)},
                            {"lambda_u", fmt(ssl.lambda_u)}});
    SslRunResult out;
    const Matrix probs = ema_forward(net, rep.splits.test.x);
    out.test_error = error_rate(probs, rep.splits.test.y);
    const auto conf = confidence(probs);
    out.test_ece = ece(conf.c, conf.y_hat, rep.splits.test.y).ece;
    if (!log.empty()) {
        const std::size_t tail = std::max<std::size_t>(1, log.size() / 10);
        double acc = 0.0;
        for (std::size_t i = log.size() - tail; i < log.size(); ++i) acc += log[i].loss_total;
        out.final_train_loss = acc / static_cast<double>(tail);
    }
    return out;
}

}  // namespace

NetState train_supervised(const Matrix& x, const std::vector<std::size_t>& y,
                          std::size_t n_classes, const AugmentorChoice& choice, double param,
                          const ExperimentConfig& config, std::uint64_t net_seed, Rng& rng) {
    if (x.rows() == 0) throw std::invalid_argument("train_supervised: empty training set");
    NetState net = NetState::init(make_net_config(config, x.cols(), net_seed));
    const Matrix targets = one_hot(y, n_classes);
    const std::size_t batch = std::min(config.supervised_batch, x.rows());
    const double w = 1.0 / static_cast<double>(batch);
    const std::vector<double> weights(batch, w);

    std::optional<Augmentor> augmentor;
    if (choice.kind != AugmentorChoice::Kind::None) augmentor.emplace(choice.to_augmentor(param));

    std::vector<std::size_t> order(x.rows());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    for (std::size_t iter = 0; iter < config.supervised_iterations; ++iter) {
        if (cursor + batch > order.size()) {
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        std::vector<std::size_t> idx(order.begin() + cursor, order.begin() + cursor + batch);
        cursor += batch;

        Matrix bx = x.take_rows(idx);
        Matrix bt = targets.take_rows(idx);
        if (augmentor) {
            // In-batch pairing: each sample mixes with a shuffled batchmate.
            std::vector<std::size_t> perm(batch);
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            std::vector<Sample> originals(batch), partners(batch);
            for (std::size_t i = 0; i < batch; ++i) {
                originals[i] = Sample{{bx.row(i).begin(), bx.row(i).end()},
                                      {bt.row(i).begin(), bt.row(i).end()}};
                partners[i] = Sample{{bx.row(perm[i]).begin(), bx.row(perm[i]).end()},
                                     {bt.row(perm[i]).begin(), bt.row(perm[i]).end()}};
            }
            const auto mixed = mix_batches(originals, partners, *augmentor, rng);
            for (std::size_t i = 0; i < batch; ++i) {
                for (std::size_t c = 0; c < bx.cols(); ++c) bx(i, c) = mixed[i].x_tilde[c];
                for (std::size_t c = 0; c < n_classes; ++c) bt(i, c) = mixed[i].p_tilde[c];
            }
        }
        backward_and_step(net, bx, bt, weights, config.ssl.learn_rate);
    }
    return net;
}

std::string run_calibration(const ExperimentConfig& config) {
    config.validate();
    json report;
    report["kind"] = "calibrate";
    report["master_seed"] = config.seed;
    report["config"] = echo_json(config);
    report["cells"] = json::array();

    for (std::size_t pi = 0; pi < config.proportions.size(); ++pi) {
        const double proportion = config.proportions[pi];
        const std::size_t pool =
            config.dataset.n_samples - config.split.n_validation - config.split.n_test;
        const std::size_t n_labeled = std::max<std::size_t>(
            config.dataset.n_classes,
            static_cast<std::size_t>(std::llround(proportion * static_cast<double>(pool))));
        SplitSpec cell_split = config.split;
        cell_split.n_labeled = n_labeled;

        for (std::size_t ai = 0; ai < config.augmentors.size(); ++ai) {
            const AugmentorChoice& choice = config.augmentors[ai];
            json cell;
            cell["proportion"] = proportion;
            cell["n_labeled"] = n_labeled;
            cell["augmentor"] = choice.name();
            cell["repeats"] = json::array();
            std::vector<double> eces, accs;
            for (std::size_t r = 0; r < config.repeats; ++r) {
                const RepeatData rep = make_repeat(config, cell_split, r);
                std::vector<double> grid = choice.param_grid;
                if (grid.empty()) grid = {choice.default_param()};

                // Validation accuracy picks the augmentor parameter.
                double best_acc = -1.0, chosen = grid.front();
                NetState best_net = NetState::init(
                    make_net_config(config, rep.splits.labeled.x.cols(), rep.net_seed));
                for (std::size_t gi = 0; gi < grid.size(); ++gi) {
                    Rng rng(stream(config.seed, {5, r, pi, ai, gi}));
                    NetState net = train_supervised(rep.splits.labeled.x, rep.splits.labeled.y,
                                                    config.dataset.n_classes, choice, grid[gi],
                                                    config, rep.net_seed, rng);
                    double val_acc = 1.0;
                    if (rep.splits.validation.size() > 0)
                        val_acc = 1.0 - error_rate(forward(net, rep.splits.validation.x),
                                                   rep.splits.validation.y);
                    if (val_acc > best_acc) {
                        best_acc = val_acc;
                        chosen = grid[gi];
                        best_net = std::move(net);
                    }
                }

                const Matrix probs = forward(best_net, rep.splits.test.x);
                const auto conf = confidence(probs);
                const CalibrationReport cal = ece(conf.c, conf.y_hat, rep.splits.test.y);
                const double acc = 1.0 - error_rate(probs, rep.splits.test.y);
                eces.push_back(cal.ece);
                accs.push_back(acc);
                json jr;
                jr["repeat"] = r;
                jr["chosen_param"] = chosen;
                jr["ece"] = cal.ece;
                jr["accuracy"] = acc;
                jr["calibration"] = json::parse(cal.to_json());
                cell["repeats"].push_back(jr);
            }
            cell["mean_ece"] = mean_of(eces);
            cell["sd_ece"] = sd_of(eces);
            cell["mean_accuracy"] = mean_of(accs);
            cell["sd_accuracy"] = sd_of(accs);
            report["cells"].push_back(cell);
        }
    }
    write_text(config.out_path, report.dump(2) + "\n");
    return config.out_path;
}

std::string run_ssl(const ExperimentConfig& config) {
    config.validate();
    SslConfig ssl = config.ssl;
    ssl.augmentor = config.augmentors.front().to_augmentor(config.augmentors.front().default_param());
    SslConfig baseline = ssl;
    baseline.lambda_u = 0.0;

    json report;
    report["kind"] = "ssl";
    report["master_seed"] = config.seed;
    report["config"] = echo_json(config);
    report["arms"] = json::array();

    const std::vector<std::pair<std::string, const SslConfig*>> arms = {
        {"ssl", &ssl}, {"supervised_baseline", &baseline}};
    for (const auto& [name, arm_cfg] : arms) {
        json arm;
        arm["name"] = name;
        arm["lambda_u"] = arm_cfg->lambda_u;
        arm["repeats"] = json::array();
        std::vector<double> errors;
        for (std::size_t r = 0; r < config.repeats; ++r) {
            const RepeatData rep = make_repeat(config, config.split, r);
            std::string log_path;
            if (!config.step_log_prefix.empty())
                log_path = config.step_log_prefix + "." + name + ".r" + std::to_string(r) + ".csv";
            const SslRunResult res = run_ssl_once(config, *arm_cfg, rep, log_path);
            errors.push_back(res.test_error);
            arm["repeats"].push_back({{"repeat", r},
                                      {"test_error", res.test_error},
                                      {"test_ece", res.test_ece},
                                      {"final_train_loss", res.final_train_loss}});
        }
        arm["mean_error"] = mean_of(errors);
        arm["sd_error"] = sd_of(errors);
        report["arms"].push_back(arm);
    }
    write_text(config.out_path, report.dump(2) + "\n");
    return config.out_path;
}

std::string run_threshold_sweep(const ExperimentConfig& config) {
    config.validate();
    std::vector<double> thresholds = config.thresholds;
    std::sort(thresholds.begin(), thresholds.end());

    std::ostringstream os;
    os.precision(17);
    for (const auto& [k, v] : config.echo()) os << "# " << k << "=" << v << "\n";
    os << "c_thr,mean_test_error,sd_test_error,mean_final_train_loss,sd_final_train_loss,repeats\n";
    for (const double c_thr : thresholds) {
        SslConfig ssl = config.ssl;
        ssl.c_thr = c_thr;
        ssl.augmentor =
            config.augmentors.front().to_augmentor(config.augmentors.front().default_param());
        std::vector<double> errors, losses;
        for (std::size_t r = 0; r < config.repeats; ++r) {
            const RepeatData rep = make_repeat(config, config.split, r);
            const SslRunResult res = run_ssl_once(config, ssl, rep);
            errors.push_back(res.test_error);
            losses.push_back(res.final_train_loss);
        }
        os << c_thr << ',' << mean_of(errors) << ',' << sd_of(errors) << ',' << mean_of(losses)
           << ',' << sd_of(losses) << ',' << config.repeats << "\n";
    }
    write_text(config.out_path, os.str());
    return config.out_path;
}

std::string run_lambda_diagnostics(const ExperimentConfig& config) {
    config.validate();
    const AugmentorChoice& choice = config.augmentors.front();
    const AugmentorConfig aug = choice.to_augmentor(choice.default_param());
    const LambdaSampler sampler(aug.kernel);

    const std::size_t bins = config.diag_bins;
    std::vector<std::size_t> counts(bins, 0);
    Rng rng(stream(config.seed, {7}));
    for (std::size_t i = 0; i < config.diag_draws; ++i) {
        const double v = sampler.sample(rng);
        std::size_t b = static_cast<std::size_t>(v * static_cast<double>(bins));
        counts[std::min(b, bins - 1)] += 1;
    }

    std::ostringstream os;
    os.precision(17);
    for (const auto& [k, v] : config.echo()) os << "# " << k << "=" << v << "\n";
    os << "lo,hi,count,empirical_mass,empirical_density,pdf_mass,pdf_center,lambda_b_center\n";
    const double width = 1.0 / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        const double lo = static_cast<double>(b) * width;
        const double hi = lo + width;
        const double center = 0.5 * (lo + hi);
        const double mass = static_cast<double>(counts[b]) / static_cast<double>(config.diag_draws);
        double lambda_b = std::numeric_limits<double>::quiet_NaN();
        try {
            lambda_b = compute_lambda_b(sampler.spec(), center);
        } catch (const DegenerateKernelError&) {
            // zero-support center: leave NaN
        }
        os << lo << ',' << hi << ',' << counts[b] << ',' << mass << ',' << mass / width << ','
           << sampler.cdf(hi) - sampler.cdf(lo) << ',' << sampler.pdf(center) << ',' << lambda_b
           << "\n";
    }
    write_text(config.out_path, os.str());
    return config.out_path;
}

std::string run_experiment(const ExperimentConfig& config) {
    switch (config.kind) {
        case ExperimentKind::Calibrate: return run_calibration(config);
        case ExperimentKind::SslTrain: return run_ssl(config);
        case ExperimentKind::ThresholdSweep: return run_threshold_sweep(config);
        case ExperimentKind::LambdaDiagnostics: return run_lambda_diagnostics(config);
    }
    throw std::logic_error("run_experiment: unhandled kind");
}

}  // namespace mixconf
