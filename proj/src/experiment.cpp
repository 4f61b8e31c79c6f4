#include "noiseavg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "noiseavg/error.hpp"
#include "noiseavg/io_util.hpp"

namespace noiseavg {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("invalid value for " + key + ": '" + value + "' (expected a number)");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const std::uint64_t v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("invalid value for " + key + ": '" + value +
                              "' (expected a non-negative integer)");
    }
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("invalid value for " + key + ": '" + value + "' (expected an integer)");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ValidationError("invalid value for " + key + ": '" + value + "' (expected true/false)");
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> parts;
    std::string current;
    for (char c : value) {
        if (c == ',') {
            parts.push_back(trim(current));
            current.clear();
        } else {
            current += c;
        }
    }
    parts.push_back(trim(current));
    return parts;
}

std::vector<std::size_t> parse_dims(const std::string& key, const std::string& value) {
    std::vector<std::size_t> dims;
    for (const std::string& part : split_list(value))
        dims.push_back(static_cast<std::size_t>(parse_u64(key, part)));
    if (dims.size() < 2) throw ValidationError(key + " needs at least input and output dims");
    return dims;
}

std::string dims_to_string(const std::vector<std::size_t>& dims) {
    std::vector<std::string> parts;
    for (std::size_t d : dims) parts.push_back(std::to_string(d));
    return join(parts, ",");
}

constexpr const char* kAllKeys[] = {
    "data.source",          "data.n_per_class",   "data.dim",
    "data.classes",         "data.spread",        "data.seed",
    "data.train_fraction",  "data.idx_images",    "data.idx_labels",
    "ensemble.members",     "ensemble.layer_dims", "ensemble.activation",
    "ensemble.learning_rate", "ensemble.epochs",  "ensemble.batch_size",
    "ensemble.shuffle_seed", "ensemble.base_seed",
    "attack.epsilon",       "attack.step_size",   "attack.num_steps",
    "attack.random_start",  "attack.rs_seed",     "attack.clip_min",
    "attack.clip_max",      "attack.noise_kind",  "attack.noise_sigma",
    "attack.noise_samples", "attack.noise_alpha", "attack.resample",
    "attack.noise_seed",    "eval.num_points",    "eval.f_estimator",
    "eval.output_dir",
};

} // namespace

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "data.source") {
        if (value != "blobs" && value != "idx")
            throw ValidationError("invalid value for data.source: '" + value +
                                  "' (expected blobs or idx)");
        cfg.data_source = value;
    } else if (key == "data.n_per_class") {
        cfg.data_n_per_class = static_cast<std::size_t>(parse_u64(key, value));
    } else if (key == "data.dim") {
        cfg.data_dim = static_cast<std::size_t>(parse_u64(key, value));
    } else if (key == "data.classes") {
        cfg.data_classes = parse_int(key, value);
    } else if (key == "data.spread") {
        cfg.data_spread = parse_double(key, value);
    } else if (key == "data.seed") {
        cfg.data_seed = parse_u64(key, value);
    } else if (key == "data.train_fraction") {
        cfg.data_train_fraction = parse_double(key, value);
    } else if (key == "data.idx_images") {
        cfg.data_idx_images = value;
    } else if (key == "data.idx_labels") {
        cfg.data_idx_labels = value;
    } else if (key == "ensemble.members") {
        cfg.ensemble_members = static_cast<std::size_t>(parse_u64(key, value));
    } else if (key == "ensemble.layer_dims") {
        cfg.ensemble_layer_dims = parse_dims(key, value);
    } else if (key == "ensemble.activation") {
        try {
            cfg.ensemble_activation = activation_from_name(value);
        } catch (const ValidationError&) {
            throw ValidationError("invalid value for ensemble.activation: '" + value + "'");
        }
    } else if (key == "ensemble.learning_rate") {
        cfg.train.learning_rate = parse_double(key, value);
    } else if (key == "ensemble.epochs") {
        cfg.train.epochs = parse_int(key, value);
    } else if (key == "ensemble.batch_size") {
        cfg.train.batch_size = parse_int(key, value);
    } else if (key == "ensemble.shuffle_seed") {
        cfg.train.shuffle_seed = parse_u64(key, value);
    } else if (key == "ensemble.base_seed") {
        cfg.ensemble_base_seed = parse_u64(key, value);
    } else if (key == "attack.epsilon") {
        cfg.attack.epsilon = parse_double(key, value);
    } else if (key == "attack.step_size") {
        cfg.attack.step_size = parse_double(key, value);
    } else if (key == "attack.num_steps") {
        cfg.attack.num_steps = parse_int(key, value);
    } else if (key == "attack.random_start") {
        cfg.attack.random_start = parse_bool(key, value);
    } else if (key == "attack.rs_seed") {
        cfg.attack.rs_seed = parse_u64(key, value);
    } else if (key == "attack.clip_min") {
        cfg.attack.clip_min = parse_double(key, value);
    } else if (key == "attack.clip_max") {
        cfg.attack.clip_max = parse_double(key, value);
    } else if (key == "attack.noise_kind") {
        try {
            cfg.noise_kind = noise_kind_from_name(value);
        } catch (const ValidationError&) {
            throw ValidationError("invalid value for attack.noise_kind: '" + value + "'");
        }
    } else if (key == "attack.noise_sigma") {
        cfg.noise_sigma = parse_double(key, value);
    } else if (key == "attack.noise_samples") {
        cfg.noise_samples = static_cast<std::size_t>(parse_u64(key, value));
    } else if (key == "attack.noise_alpha") {
        if (value == "uniform") {
            cfg.noise_alpha.clear();
        } else {
            cfg.noise_alpha.clear();
            for (const std::string& part : split_list(value))
                cfg.noise_alpha.push_back(parse_double(key, part));
        }
    } else if (key == "attack.resample") {
        if (value == "once")
            cfg.resample = ResampleMode::once;
        else if (value == "per_step")
            cfg.resample = ResampleMode::per_step;
        else
            throw ValidationError("invalid value for attack.resample: '" + value +
                                  "' (expected once or per_step)");
    } else if (key == "attack.noise_seed") {
        cfg.noise_seed = parse_u64(key, value);
    } else if (key == "eval.num_points") {
        cfg.eval_num_points = static_cast<std::size_t>(parse_u64(key, value));
    } else if (key == "eval.f_estimator") {
        if (value == "all")
            cfg.eval_estimator = MeanEstimator::all_members;
        else if (value == "leave_one_out")
            cfg.eval_estimator = MeanEstimator::leave_one_out;
        else
            throw ValidationError("invalid value for eval.f_estimator: '" + value +
                                  "' (expected all or leave_one_out)");
    } else if (key == "eval.output_dir") {
        cfg.output_dir = value;
    } else {
        throw ValidationError("unknown config key: " + key);
    }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        throw ValidationError(std::string("cannot read config: ") + e.what());
    }

    ExperimentConfig cfg;
    std::istringstream lines(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config line " + std::to_string(line_no) +
                                  " is not key = value: '" + line + "'");
        apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void apply_master_seed(ExperimentConfig& cfg, std::uint64_t n) {
    cfg.data_seed = n;
    cfg.ensemble_base_seed = n + 1000;
    cfg.attack.rs_seed = n + 2000;
    cfg.noise_seed = n + 3000;
}

NoiseSpec ExperimentConfig::noise_spec() const {
    NoiseSpec spec;
    spec.kind = noise_kind;
    spec.noise_seed = noise_seed;
    if (noise_kind == NoiseKind::none) {
        spec.sigma = 0.0;
        spec.num_samples = 1;
        spec.weights = {1.0};
    } else {
        spec.sigma = noise_sigma;
        spec.num_samples = noise_samples;
        spec.weights = noise_alpha.empty() ? NoiseSpec::uniform_weights(noise_samples) : noise_alpha;
    }
    spec.validate();
    return spec;
}

void ExperimentConfig::validate() const {
    if (data_source == "blobs") {
        if (data_n_per_class == 0) throw ValidationError("data.n_per_class must be positive");
        if (data_dim == 0) throw ValidationError("data.dim must be positive");
        if (data_classes < 2) throw ValidationError("data.classes must be >= 2");
        if (data_spread < 0.0) throw ValidationError("data.spread must be >= 0");
        if (ensemble_layer_dims.front() != data_dim)
            throw ValidationError("ensemble.layer_dims input dim does not match data.dim");
        if (ensemble_layer_dims.back() != static_cast<std::size_t>(data_classes))
            throw ValidationError("ensemble.layer_dims output dim does not match data.classes");
    } else if (data_source == "idx") {
        if (data_idx_images.empty() || data_idx_labels.empty())
            throw ValidationError("data.idx_images and data.idx_labels are required for data.source=idx");
    } else {
        throw ValidationError("data.source must be blobs or idx");
    }
    if (!(data_train_fraction >= 0.0 && data_train_fraction <= 1.0))
        throw ValidationError("data.train_fraction must be in [0,1]");
    if (ensemble_members < 2) throw ValidationError("ensemble.members must be >= 2");
    train.validate();
    attack.validate();
    noise_spec(); // validates sigma/samples/alpha, including the simplex condition
    if (eval_num_points == 0) throw ValidationError("eval.num_points must be positive");
}

void ExperimentConfig::validate_for_theory() const {
    validate();
    if (ensemble_members < 2)
        throw ValidationError("theory evaluation needs ensemble.members >= 2");
}

std::string resolved_config_text(const ExperimentConfig& cfg) {
    std::map<std::string, std::string> kv;
    kv["data.source"] = cfg.data_source;
    kv["data.n_per_class"] = std::to_string(cfg.data_n_per_class);
    kv["data.dim"] = std::to_string(cfg.data_dim);
    kv["data.classes"] = std::to_string(cfg.data_classes);
    kv["data.spread"] = fmt_double(cfg.data_spread);
    kv["data.seed"] = std::to_string(cfg.data_seed);
    kv["data.train_fraction"] = fmt_double(cfg.data_train_fraction);
    kv["data.idx_images"] = cfg.data_idx_images;
    kv["data.idx_labels"] = cfg.data_idx_labels;
    kv["ensemble.members"] = std::to_string(cfg.ensemble_members);
    kv["ensemble.layer_dims"] = dims_to_string(cfg.ensemble_layer_dims);
    kv["ensemble.activation"] = activation_name(cfg.ensemble_activation);
    kv["ensemble.learning_rate"] = fmt_double(cfg.train.learning_rate);
    kv["ensemble.epochs"] = std::to_string(cfg.train.epochs);
    kv["ensemble.batch_size"] = std::to_string(cfg.train.batch_size);
    kv["ensemble.shuffle_seed"] = std::to_string(cfg.train.shuffle_seed);
    kv["ensemble.base_seed"] = std::to_string(cfg.ensemble_base_seed);
    kv["attack.epsilon"] = fmt_double(cfg.attack.epsilon);
    kv["attack.step_size"] = fmt_double(cfg.attack.step_size);
    kv["attack.num_steps"] = std::to_string(cfg.attack.num_steps);
    kv["attack.random_start"] = cfg.attack.random_start ? "true" : "false";
    kv["attack.rs_seed"] = std::to_string(cfg.attack.rs_seed);
    kv["attack.clip_min"] = fmt_double(cfg.attack.clip_min);
    kv["attack.clip_max"] = fmt_double(cfg.attack.clip_max);
    kv["attack.noise_kind"] = noise_kind_name(cfg.noise_kind);
    kv["attack.noise_sigma"] = fmt_double(cfg.noise_sigma);
    kv["attack.noise_samples"] = std::to_string(cfg.noise_samples);
    if (cfg.noise_alpha.empty()) {
        kv["attack.noise_alpha"] = "uniform";
    } else {
        std::vector<std::string> parts;
        for (double a : cfg.noise_alpha) parts.push_back(fmt_double(a));
        kv["attack.noise_alpha"] = join(parts, ",");
    }
    kv["attack.resample"] = cfg.resample == ResampleMode::once ? "once" : "per_step";
    kv["attack.noise_seed"] = std::to_string(cfg.noise_seed);
    kv["eval.num_points"] = std::to_string(cfg.eval_num_points);
    kv["eval.f_estimator"] =
        cfg.eval_estimator == MeanEstimator::all_members ? "all" : "leave_one_out";
    kv["eval.output_dir"] = cfg.output_dir;

    std::string out;
    for (const auto& [key, value] : kv) out += key + " = " + value + "\n";
    return out;
}

std::string key_help() {
    std::string out;
    for (const char* key : kAllKeys) out += std::string(key) + "\n";
    return out;
}

Dataset experiment_dataset(const ExperimentConfig& cfg) {
    if (cfg.data_source == "idx") return load_idx(cfg.data_idx_images, cfg.data_idx_labels);
    return gen_gaussian_blobs(cfg.data_n_per_class, cfg.data_dim, cfg.data_classes,
                              cfg.data_spread, cfg.data_seed);
}

namespace {

void write_run_manifest(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir / "config_resolved.txt", resolved_config_text(cfg));
}

std::pair<Dataset, Dataset> experiment_split(const ExperimentConfig& cfg) {
    const Dataset all = experiment_dataset(cfg);
    return split(all, cfg.data_train_fraction, cfg.data_seed + 1);
}

Ensemble load_ensemble_checked(const ExperimentConfig& cfg,
                               const std::filesystem::path& ensemble_dir, const Dataset& data) {
    const Ensemble ensemble = load_ensemble(ensemble_dir);
    if (data.size() > 0 && ensemble.input_dim() != data.dim()) {
        std::ostringstream ss;
        ss << "ensemble input dim " << ensemble.input_dim() << " does not match dataset dim "
           << data.dim();
        throw Error(ss.str());
    }
    if (static_cast<int>(ensemble.class_count()) != data.class_count)
        throw Error("ensemble class count does not match dataset class count");
    (void)cfg;
    return ensemble;
}

} // namespace

TrainEnsembleResult cmd_train_ensemble(const ExperimentConfig& cfg,
                                       const std::filesystem::path& out_dir) {
    cfg.validate();
    write_run_manifest(cfg, out_dir);

    const auto [train_set, test_set] = experiment_split(cfg);
    if (train_set.size() == 0) throw Error("training split is empty; lower data.train_fraction");

    const Ensemble ensemble =
        train_ensemble(cfg.ensemble_layer_dims, cfg.ensemble_activation, cfg.ensemble_members,
                       cfg.ensemble_base_seed, train_set, cfg.train);

    TrainEnsembleResult result;
    result.ensemble_dir = out_dir / "ensemble";
    save_ensemble(ensemble, result.ensemble_dir);

    std::string csv = "member,seed,train_accuracy,test_accuracy\n";
    for (std::size_t i = 0; i < ensemble.size(); ++i) {
        const double train_acc = accuracy(ensemble.models[i], train_set);
        const double test_acc =
            test_set.size() > 0 ? accuracy(ensemble.models[i], test_set)
                                : std::numeric_limits<double>::quiet_NaN();
        result.member_test_accuracy.push_back(test_acc);
        csv += std::to_string(i) + "," + std::to_string(ensemble.seeds[i]) + "," +
               fmt_double(train_acc) + "," + fmt_double(test_acc) + "\n";
    }
    write_text_file(out_dir / "train_summary.csv", csv);

    if (!cfg.quiet) {
        double mean_test = 0.0;
        for (double a : result.member_test_accuracy) mean_test += a;
        mean_test /= double(ensemble.size());
        std::cout << "trained " << ensemble.size() << " members -> " << result.ensemble_dir.string()
                  << " (mean test accuracy " << mean_test << ")\n";
    }
    return result;
}

AttackRunResult cmd_attack(const ExperimentConfig& cfg, const std::filesystem::path& ensemble_dir,
                           const std::filesystem::path& out_dir) {
    cfg.validate();
    write_run_manifest(cfg, out_dir);

    const auto [train_set, test_set] = experiment_split(cfg);
    if (test_set.size() == 0) throw Error("test split is empty; lower data.train_fraction");
    const Ensemble ensemble = load_ensemble_checked(cfg, ensemble_dir, test_set);

    const std::size_t k_members = ensemble.size();
    const std::size_t n_examples = std::min(cfg.eval_num_points, test_set.size());
    const NoiseSpec base_spec = cfg.noise_spec();

    std::string csv = "example_id,source,method,loss_before,loss_after,linf_delta\n";
    std::string records;

    // fooling counters per method: [0] baseline, [1] noise
    std::vector<double> fooling_sum(2, 0.0);
    std::vector<std::size_t> fooling_sources(2, 0);
    std::vector<std::vector<std::size_t>> correct(k_members), fooled_base(k_members),
        fooled_noise(k_members);

    std::size_t record_count = 0;
    for (std::size_t j = 0; j < n_examples; ++j) {
        const Tensor& x = test_set.inputs[j];
        const int label = test_set.labels[j];
        const Tensor y = one_hot(label, test_set.class_count);
        for (std::size_t s = 0; s < k_members; ++s) {
            const MlpModel& source = ensemble.models[s];
            AttackConfig atk = cfg.attack;
            atk.rs_seed = cfg.attack.rs_seed + j * k_members + s;
            NoiseSpec spec = base_spec;
            spec.noise_seed = base_spec.noise_seed + j * k_members + s;

            const double loss_before = model_loss(source, x, y);
            const Tensor adv_base = pgd_baseline(source, x, y, atk);
            const Tensor adv_noise = noise_pgd(source, x, y, atk, spec, cfg.resample);

            const bool source_correct = predict(source, x) == label;
            if (source_correct) {
                correct[s].push_back(j);
                if (predict(source, adv_base) != label) fooled_base[s].push_back(j);
                if (predict(source, adv_noise) != label) fooled_noise[s].push_back(j);
            }

            const struct {
                const char* name;
                const Tensor& adv;
            } methods[2] = {{"baseline", adv_base}, {"noise", adv_noise}};
            for (const auto& method : methods) {
                csv += std::to_string(j) + "," + std::to_string(s) + "," + method.name + "," +
                       fmt_double(loss_before) + "," +
                       fmt_double(model_loss(source, method.adv, y)) + "," +
                       fmt_double(linf_distance(method.adv, x)) + "\n";
                if (record_count++) records += ",\n";
                records += "    {\"example_id\": " + std::to_string(j) +
                           ", \"source\": " + std::to_string(s) + ", \"method\": \"" + method.name +
                           "\", \"label\": " + std::to_string(label) + ",\n     \"original\": [";
                for (std::size_t i = 0; i < x.size(); ++i)
                    records += (i ? ", " : "") + fmt_double(x[i]);
                records += "],\n     \"adversarial\": [";
                for (std::size_t i = 0; i < method.adv.size(); ++i)
                    records += (i ? ", " : "") + fmt_double(method.adv[i]);
                records += "]}";
            }
        }
    }

    AttackRunResult result;
    result.num_examples = n_examples;
    for (std::size_t s = 0; s < k_members; ++s) {
        if (correct[s].empty()) continue;
        fooling_sum[0] += double(fooled_base[s].size()) / double(correct[s].size());
        fooling_sum[1] += double(fooled_noise[s].size()) / double(correct[s].size());
        ++fooling_sources[0];
        ++fooling_sources[1];
    }
    result.baseline_fooling = fooling_sources[0] ? fooling_sum[0] / double(fooling_sources[0]) : 0.0;
    result.noise_fooling = fooling_sources[1] ? fooling_sum[1] / double(fooling_sources[1]) : 0.0;

    std::string adv = "{\n  \"format_version\": 1,\n";
    adv += "  \"epsilon\": " + fmt_double(cfg.attack.epsilon) + ",\n";
    adv += "  \"num_examples\": " + std::to_string(n_examples) + ",\n";
    adv += "  \"num_sources\": " + std::to_string(k_members) + ",\n";
    adv += "  \"methods\": [\"baseline\", \"noise\"],\n";
    adv += "  \"records\": [\n" + records + "\n  ]\n}\n";

    result.adv_file = out_dir / "adversarial_examples.json";
    result.csv_file = out_dir / "attack_metrics.csv";
    write_text_file(result.adv_file, adv);
    write_text_file(result.csv_file, csv);

    if (!cfg.quiet)
        std::cout << "attacked " << n_examples << " examples x " << k_members
                  << " sources (baseline fooling " << result.baseline_fooling << ", noise fooling "
                  << result.noise_fooling << ")\n";
    return result;
}

TransferResult cmd_eval_transfer(const ExperimentConfig& cfg,
                                 const std::filesystem::path& ensemble_dir,
                                 const std::filesystem::path& adv_file,
                                 const std::filesystem::path& out_dir) {
    cfg.validate();
    write_run_manifest(cfg, out_dir);

    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(read_text_file(adv_file));
    } catch (const json::parse_error& e) {
        throw MalformedFileError("malformed adversarial-example file " + adv_file.string() + ": " +
                                 e.what());
    }
    if (!doc.is_object() || !doc.contains("format_version"))
        throw MalformedFileError("malformed adversarial-example file " + adv_file.string());
    if (doc["format_version"].get<int>() != 1)
        throw VersionError("adversarial-example file " + adv_file.string() +
                           " has an unsupported format_version");

    const Ensemble ensemble = load_ensemble(ensemble_dir);
    const std::size_t k_members = ensemble.size();

    struct Slice {
        std::vector<Tensor> originals, adversarials;
        std::vector<int> labels;
    };
    std::map<std::pair<std::size_t, std::string>, Slice> slices;
    try {
        for (const json& rec : doc.at("records")) {
            const auto source = rec.at("source").get<std::size_t>();
            const auto method = rec.at("method").get<std::string>();
            Slice& slice = slices[{source, method}];
            slice.originals.push_back(Tensor::vector(rec.at("original").get<std::vector<double>>()));
            slice.adversarials.push_back(
                Tensor::vector(rec.at("adversarial").get<std::vector<double>>()));
            slice.labels.push_back(rec.at("label").get<int>());
        }
    } catch (const json::exception& e) {
        throw MalformedFileError("malformed adversarial-example file " + adv_file.string() + ": " +
                                 e.what());
    }

    std::string csv = "source,method,num_examples,source_fooling_rate,transfer_rate\n";
    std::map<std::string, std::vector<double>> per_method_rates;
    for (const auto& [key, slice] : slices) {
        const auto& [source_idx, method] = key;
        if (source_idx >= k_members)
            throw Error("adversarial-example file names source " + std::to_string(source_idx) +
                        " but the ensemble has " + std::to_string(k_members) + " members");
        std::vector<MlpModel> targets;
        for (std::size_t i = 0; i < k_members; ++i)
            if (i != source_idx) targets.push_back(ensemble.models[i]);

        const double rate = transfer_rate(targets, slice.originals, slice.adversarials, slice.labels);
        const double fooling = transfer_rate({ensemble.models[source_idx]}, slice.originals,
                                             slice.adversarials, slice.labels);
        per_method_rates[method].push_back(rate);
        csv += std::to_string(source_idx) + "," + method + "," +
               std::to_string(slice.labels.size()) + "," + fmt_double(fooling) + "," +
               fmt_double(rate) + "\n";
    }

    TransferResult result;
    for (const auto& [method, rates] : per_method_rates) {
        double mean = 0.0;
        for (double r : rates) mean += r;
        mean /= double(rates.size());
        csv += "mean," + method + ",," + "," + fmt_double(mean) + "\n";
        if (method == "baseline") result.baseline_mean = mean;
        if (method == "noise") result.noise_mean = mean;
    }

    result.csv_file = out_dir / "transfer_rates.csv";
    write_text_file(result.csv_file, csv);

    if (!cfg.quiet)
        std::cout << "transfer rates: baseline " << result.baseline_mean << ", noise "
                  << result.noise_mean << "\n";
    return result;
}

TheoryVerdict cmd_verify_theory(const ExperimentConfig& cfg,
                                const std::filesystem::path& ensemble_dir,
                                const std::filesystem::path& out_dir) {
    cfg.validate_for_theory();
    write_run_manifest(cfg, out_dir);

    const auto [train_set, test_set] = experiment_split(cfg);
    if (test_set.size() == 0) throw Error("test split is empty; lower data.train_fraction");
    const Ensemble ensemble = load_ensemble_checked(cfg, ensemble_dir, test_set);

    const NoiseSpec spec = cfg.noise_spec();
    RandomEngine noise_rng(spec.noise_seed);
    const std::size_t k_members = ensemble.size();

    std::string csv =
        "example_id,K,M,sigma,kind,f_hat_mse,f_bar_mse,margin,assumption_gap,min_rho,max_rho,cs_ok\n";

    TheoryVerdict verdict;
    verdict.points = cfg.eval_num_points;
    double margin_sum = 0.0;
    double gap_sum = 0.0;
    std::size_t holds = 0;

    for (std::size_t i = 0; i < cfg.eval_num_points; ++i) {
        const std::size_t example = i % test_set.size();
        const std::size_t source = i % k_members;
        const Tensor& x = test_set.inputs[example];
        const Tensor y = one_hot(test_set.labels[example], test_set.class_count);

        AttackConfig atk = cfg.attack;
        atk.rs_seed = cfg.attack.rs_seed + i;
        const Tensor x_adv = pgd_baseline(ensemble.models[source], x, y, atk);

        EvalPoint point;
        point.x = x;
        point.delta = sub(x_adv, x);
        point.y_onehot = y;
        point.noises = sample_noises(spec, x.size(), noise_rng);
        point.weights = spec.weights;

        const ErrorStats stats = mse_stats(ensemble, point, cfg.eval_estimator);
        const MseInequalityReport ineq = verify_mse_inequality(stats);
        const CauchySchwarzReport cs = verify_cauchy_schwarz(stats.sample_errors);

        double min_rho = std::numeric_limits<double>::quiet_NaN();
        double max_rho = std::numeric_limits<double>::quiet_NaN();
        if (stats.rho_defined) {
            min_rho = std::numeric_limits<double>::infinity();
            max_rho = -std::numeric_limits<double>::infinity();
            for (const auto& row : stats.rho)
                for (double r : row) {
                    min_rho = std::min(min_rho, r);
                    max_rho = std::max(max_rho, r);
                }
        }

        csv += std::to_string(i) + "," + std::to_string(k_members) + "," +
               std::to_string(spec.num_samples) + "," + fmt_double(spec.sigma) + "," +
               noise_kind_name(spec.kind) + "," + fmt_double(stats.source_mse) + "," +
               fmt_double(stats.averaged_mse) + "," + fmt_double(ineq.margin) + "," +
               fmt_double(stats.assumption_gap) + "," + fmt_double(min_rho) + "," +
               fmt_double(max_rho) + "," + (cs.ok ? "1" : "0") + "\n";

        if (ineq.holds) ++holds;
        margin_sum += ineq.margin;
        gap_sum += stats.assumption_gap;
        verdict.cs_all_ok = verdict.cs_all_ok && cs.ok;
        verdict.expansion_all_ok = verdict.expansion_all_ok && ineq.expansion_ok;
    }

    verdict.holds_fraction = double(holds) / double(cfg.eval_num_points);
    verdict.mean_margin = margin_sum / double(cfg.eval_num_points);
    verdict.mean_assumption_gap = gap_sum / double(cfg.eval_num_points);

    std::string verdict_line =
        "points=" + std::to_string(verdict.points) +
        " holds_fraction=" + fmt_double(verdict.holds_fraction) +
        " mean_margin=" + fmt_double(verdict.mean_margin) +
        " mean_assumption_gap=" + fmt_double(verdict.mean_assumption_gap) +
        " cs_all_ok=" + (verdict.cs_all_ok ? "1" : "0") +
        " expansion_all_ok=" + (verdict.expansion_all_ok ? "1" : "0") + "\n";

    verdict.csv_file = out_dir / "theory_stats.csv";
    verdict.verdict_file = out_dir / "verdict.txt";
    write_text_file(verdict.csv_file, csv);
    write_text_file(verdict.verdict_file, verdict_line);

    if (!cfg.quiet) std::cout << verdict_line;
    return verdict;
}

GradcheckSummary cmd_gradcheck(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    write_run_manifest(cfg, out_dir);

    GradcheckSummary summary;
    summary.pass = true;

    std::vector<std::pair<std::vector<std::size_t>, Activation>> architectures = {
        {{4, 4, 3}, Activation::relu},    {{8, 8, 4}, Activation::relu},
        {{16, 16, 10}, Activation::relu}, {{4, 4, 3}, Activation::tanh},
        {{8, 8, 4}, Activation::tanh},    {{16, 16, 10}, Activation::tanh},
    };
    architectures.emplace_back(cfg.ensemble_layer_dims, cfg.ensemble_activation);

    std::string report;
    for (const auto& [dims, act] : architectures) {
        const GradCheckResult r = run_gradcheck(dims, act, 20, cfg.ensemble_base_seed);
        summary.results.push_back(r);
        summary.pass = summary.pass && r.pass;
        report += "arch=" + dims_to_string(dims) + " activation=" + activation_name(act) +
                  " triples=" + std::to_string(r.triples) +
                  " max_rel_err=" + fmt_double(r.max_rel_err) +
                  " status=" + (r.pass ? "pass" : "FAIL") + "\n";
    }
    report += std::string("overall=") + (summary.pass ? "pass" : "FAIL") + "\n";

    summary.report_file = out_dir / "gradcheck.txt";
    write_text_file(summary.report_file, report);
    if (!cfg.quiet) std::cout << report;
    if (!summary.pass) throw Error("gradient check failed; see " + summary.report_file.string());
    return summary;
}

} // namespace noiseavg
