// Acceptance suite: one test case per criterion, one PASS/FAIL line each.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "noiseavg/attack.hpp"
#include "noiseavg/data.hpp"
#include "noiseavg/error.hpp"
#include "noiseavg/experiment.hpp"
#include "noiseavg/gradcheck.hpp"
#include "noiseavg/io_util.hpp"
#include "noiseavg/model.hpp"
#include "noiseavg/theory.hpp"

using namespace noiseavg;

static std::string g_cli_path;

int main(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--cli") g_cli_path = argv[i + 1];
    doctest::Context ctx;
    ctx.applyCommandLine(argc, argv);
    return ctx.run();
}

namespace {

void report(int criterion, bool ok, const std::string& detail) {
    std::printf("[criterion %d] %s: %s\n", criterion, ok ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "noiseavg_acceptance" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Shared theory fixture: K=8 blob ensemble, eps = sigma = 0.3, uniform alpha,
// 100 eval points per M in {2, 4, 8}.
struct TheoryLeg {
    std::size_t num_samples = 0;
    std::size_t points = 0;
    std::size_t holds = 0;
    double mean_margin = 0.0;
    double mean_f_hat = 0.0;
    double mean_f_bar = 0.0;
    double mean_gap = 0.0;
    double worst_cs_violation = -1.0;
    double worst_expansion_rel_err = 0.0;
};

struct TheoryGrid {
    std::vector<TheoryLeg> legs;
    double elapsed_seconds = 0.0;
};

const TheoryGrid& theory_grid() {
    static const TheoryGrid grid = [] {
        const auto t0 = std::chrono::steady_clock::now();
        const Dataset all = gen_gaussian_blobs(150, 8, 2, 0.25, 12);
        const auto [train_set, test_set] = split(all, 0.5, 13);
        TrainConfig tc;
        tc.learning_rate = 0.1;
        tc.epochs = 10;
        tc.batch_size = 16;
        const Ensemble ensemble =
            train_ensemble({8, 16, 2}, Activation::relu, 8, 11000, train_set, tc);

        AttackConfig atk;
        atk.epsilon = 0.3;
        atk.step_size = 0.05;
        atk.num_steps = 20;

        TheoryGrid out;
        for (std::size_t m_samples : {2, 4, 8}) {
            NoiseSpec spec;
            spec.kind = NoiseKind::uniform;
            spec.sigma = 0.3;
            spec.num_samples = m_samples;
            spec.weights = NoiseSpec::uniform_weights(m_samples);
            RandomEngine noise_rng(777);

            TheoryLeg leg;
            leg.num_samples = m_samples;
            leg.points = 100;
            for (std::size_t i = 0; i < leg.points; ++i) {
                const std::size_t example = i % test_set.size();
                const std::size_t source = i % ensemble.size();
                const Tensor& x = test_set.inputs[example];
                const Tensor y = one_hot(test_set.labels[example], 2);
                const Tensor x_adv = pgd_baseline(ensemble.models[source], x, y, atk);

                EvalPoint point;
                point.x = x;
                point.delta = sub(x_adv, x);
                point.y_onehot = y;
                point.noises = sample_noises(spec, x.size(), noise_rng);
                point.weights = spec.weights;

                const ErrorStats stats = mse_stats(ensemble, point);
                const MseInequalityReport ineq = verify_mse_inequality(stats);
                const CauchySchwarzReport cs = verify_cauchy_schwarz(stats.sample_errors);

                if (ineq.holds) ++leg.holds;
                leg.mean_margin += ineq.margin;
                leg.mean_f_hat += stats.source_mse;
                leg.mean_f_bar += stats.averaged_mse;
                leg.mean_gap += stats.assumption_gap;
                leg.worst_cs_violation = std::max(leg.worst_cs_violation, cs.worst_violation);
                leg.worst_expansion_rel_err =
                    std::max(leg.worst_expansion_rel_err, ineq.expansion_rel_err);
            }
            leg.mean_margin /= double(leg.points);
            leg.mean_f_hat /= double(leg.points);
            leg.mean_f_bar /= double(leg.points);
            leg.mean_gap /= double(leg.points);
            out.legs.push_back(leg);
        }
        out.elapsed_seconds = seconds_since(t0);
        return out;
    }();
    return grid;
}

int run_cli(const std::string& args) {
    const std::string cmd = g_cli_path + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot_dir(const std::filesystem::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir))
        if (entry.is_regular_file())
            files[entry.path().lexically_relative(dir).string()] = read_text_file(entry.path());
    return files;
}

} // namespace

TEST_CASE("criterion 1: input gradients match central finite differences") {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::pair<std::vector<std::size_t>, Activation>> architectures = {
        {{4, 4, 3}, Activation::relu},
        {{8, 8, 4}, Activation::relu},
        {{16, 16, 10}, Activation::relu},
        {{16, 16, 10}, Activation::tanh},
    };
    double worst = 0.0;
    bool all_pass = true;
    for (const auto& [dims, act] : architectures) {
        const GradCheckResult r = run_gradcheck(dims, act, 20, 2024, 1e-5, 1e-5);
        worst = std::max(worst, r.max_rel_err);
        all_pass = all_pass && r.pass;
    }
    const double elapsed = seconds_since(t0);
    report(1, all_pass && elapsed < 10.0,
           "max rel err " + fmt_double(worst) + " over 80 triples, " + fmt_double(elapsed) + " s");
    CHECK(all_pass);
    CHECK(elapsed < 10.0);
}

TEST_CASE("criterion 2: noise_pgd with kind=none is bit-identical to pgd_baseline") {
    const Dataset all = gen_gaussian_blobs(120, 2, 2, 0.06, 17);
    const auto [train_set, test_set] = split(all, 0.5, 18);
    TrainConfig tc;
    tc.learning_rate = 0.1;
    tc.epochs = 15;
    tc.batch_size = 16;
    const MlpModel model = train(init_model({2, 16, 2}, Activation::relu, 3), train_set, tc);

    NoiseSpec spec; // kind=none, M=1, sigma=0
    spec.weights = {1.0};

    std::size_t identical = 0;
    const std::size_t n = 100;
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor& x = test_set.inputs[i % test_set.size()];
        const Tensor y = one_hot(test_set.labels[i % test_set.size()], 2);
        AttackConfig cfg;
        cfg.epsilon = 0.3;
        cfg.step_size = 0.05;
        cfg.num_steps = 10;
        cfg.random_start = true;
        cfg.rs_seed = 5000 + i;
        const Tensor baseline = pgd_baseline(model, x, y, cfg);
        const Tensor averaged = noise_pgd(model, x, y, cfg, spec, ResampleMode::once);
        const Tensor averaged_ps = noise_pgd(model, x, y, cfg, spec, ResampleMode::per_step);
        if (baseline == averaged && baseline == averaged_ps) ++identical;
    }
    report(2, identical == n,
           std::to_string(identical) + "/" + std::to_string(n) + " examples bit-identical");
    CHECK(identical == n);
}

TEST_CASE("criterion 3: feasibility invariants across the attack grid") {
    const Dataset all = gen_gaussian_blobs(60, 2, 2, 0.06, 19);
    const auto [train_set, test_set] = split(all, 0.5, 20);
    TrainConfig tc;
    tc.learning_rate = 0.1;
    tc.epochs = 10;
    tc.batch_size = 16;
    const MlpModel model = train(init_model({2, 16, 2}, Activation::relu, 4), train_set, tc);

    std::size_t checked = 0;
    std::size_t violations = 0;
    double worst_excess = 0.0;
    for (double eps : {0.0, 0.1, 0.3}) {
        for (int steps : {0, 1, 10, 40}) {
            for (bool random_start : {false, true}) {
                AttackConfig cfg;
                cfg.epsilon = eps;
                cfg.step_size = 0.05;
                cfg.num_steps = steps;
                cfg.random_start = random_start;
                cfg.rs_seed = 42 + steps;

                for (std::size_t i = 0; i < 10; ++i) {
                    const Tensor& x = test_set.inputs[i];
                    const Tensor y = one_hot(test_set.labels[i], 2);
                    std::vector<Tensor> outputs;
                    outputs.push_back(pgd_baseline(model, x, y, cfg));
                    outputs.push_back(fgsm(model, x, y, eps));
                    NoiseSpec uniform_spec;
                    uniform_spec.kind = NoiseKind::uniform;
                    uniform_spec.sigma = eps;
                    uniform_spec.num_samples = 4;
                    uniform_spec.weights = NoiseSpec::uniform_weights(4);
                    uniform_spec.noise_seed = 7 + i;
                    outputs.push_back(noise_pgd(model, x, y, cfg, uniform_spec, ResampleMode::once));
                    NoiseSpec gauss_spec = uniform_spec;
                    gauss_spec.kind = NoiseKind::gaussian;
                    outputs.push_back(
                        noise_pgd(model, x, y, cfg, gauss_spec, ResampleMode::per_step));

                    for (const Tensor& adv : outputs) {
                        ++checked;
                        const double excess = linf_distance(adv, x) - eps;
                        worst_excess = std::max(worst_excess, excess);
                        bool in_box = true;
                        for (double v : adv.data) in_box = in_box && v >= 0.0 && v <= 1.0;
                        if (excess > 1e-12 || !in_box) ++violations;
                    }
                }
            }
        }
    }
    report(3, violations == 0,
           std::to_string(checked) + " outputs checked, worst ball excess " +
               fmt_double(worst_excess));
    CHECK(violations == 0);
}

TEST_CASE("criterion 4: empirical Cauchy-Schwarz never violated beyond 1e-9") {
    const TheoryGrid& grid = theory_grid();
    double worst = -1.0;
    for (const TheoryLeg& leg : grid.legs) worst = std::max(worst, leg.worst_cs_violation);
    const TheoryLeg& m8 = grid.legs.back();
    report(4, worst <= 1e-9,
           "worst violation " + fmt_double(worst) + " over " + std::to_string(m8.points) +
               " points x {2,4,8} samples, K=8");
    REQUIRE(m8.num_samples == 8);
    CHECK(worst <= 1e-9);
}

TEST_CASE("criterion 5: expansion identity to 1e-9 relative on every eval point") {
    const TheoryGrid& grid = theory_grid();
    double worst = 0.0;
    for (const TheoryLeg& leg : grid.legs) worst = std::max(worst, leg.worst_expansion_rel_err);
    report(5, worst <= 1e-9, "worst relative error " + fmt_double(worst));
    CHECK(worst <= 1e-9);
}

TEST_CASE("criterion 6: headline MSE inequality on the K=8 blob ensemble") {
    const TheoryGrid& grid = theory_grid();
    bool ok = grid.elapsed_seconds < 300.0;
    std::string detail;
    for (const TheoryLeg& leg : grid.legs) {
        const double holds_fraction = double(leg.holds) / double(leg.points);
        ok = ok && holds_fraction >= 0.9 && leg.mean_f_bar <= leg.mean_f_hat;
        detail += "M=" + std::to_string(leg.num_samples) + ": holds " +
                  fmt_double(holds_fraction) + ", mean f_hat_mse " + fmt_double(leg.mean_f_hat) +
                  ", mean f_bar_mse " + fmt_double(leg.mean_f_bar) + ", mean gap " +
                  fmt_double(leg.mean_gap) + "; ";
    }
    detail += "elapsed " + fmt_double(grid.elapsed_seconds) + " s";
    report(6, ok, detail);
    for (const TheoryLeg& leg : grid.legs) {
        INFO("M = ", leg.num_samples);
        CHECK(double(leg.holds) / double(leg.points) >= 0.9);
        CHECK(leg.mean_f_bar <= leg.mean_f_hat);
    }
    CHECK(grid.elapsed_seconds < 300.0);
}

TEST_CASE("criterion 7: noise-averaged attacks transfer at least as well as the baseline") {
    std::vector<double> improvements;
    std::string per_seed;
    for (std::uint64_t seed : {21, 22, 23, 24, 25}) {
        const Dataset all = gen_gaussian_blobs(300, 8, 2, 0.15, seed);
        const auto [train_set, test_set] = split(all, 0.5, seed + 1);
        TrainConfig tc;
        tc.learning_rate = 0.1;
        tc.epochs = 15;
        tc.batch_size = 16;
        const Ensemble ensemble =
            train_ensemble({8, 16, 2}, Activation::relu, 8, seed * 1000, train_set, tc);

        // examples every member classifies correctly
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < test_set.size() && idx.size() < 200; ++i) {
            bool all_correct = true;
            for (const MlpModel& m : ensemble.models)
                all_correct = all_correct && predict(m, test_set.inputs[i]) == test_set.labels[i];
            if (all_correct) idx.push_back(i);
        }
        REQUIRE(idx.size() == 200);

        AttackConfig atk;
        atk.epsilon = 0.3;
        atk.step_size = 0.05;
        atk.num_steps = 20;

        double baseline_mean = 0.0;
        double noise_mean = 0.0;
        for (std::size_t s = 0; s < ensemble.size(); ++s) {
            const MlpModel& source = ensemble.models[s];
            std::vector<MlpModel> targets;
            for (std::size_t t = 0; t < ensemble.size(); ++t)
                if (t != s) targets.push_back(ensemble.models[t]);

            std::vector<Tensor> originals, adv_baseline, adv_noise;
            std::vector<int> labels;
            for (std::size_t j = 0; j < idx.size(); ++j) {
                const Tensor& x = test_set.inputs[idx[j]];
                const Tensor y = one_hot(test_set.labels[idx[j]], 2);
                NoiseSpec spec;
                spec.kind = NoiseKind::uniform;
                spec.sigma = atk.epsilon; // sigma = eps
                spec.num_samples = 8;
                spec.weights = NoiseSpec::uniform_weights(8);
                spec.noise_seed = seed * 100000 + j * ensemble.size() + s;
                originals.push_back(x);
                labels.push_back(test_set.labels[idx[j]]);
                adv_baseline.push_back(pgd_baseline(source, x, y, atk));
                adv_noise.push_back(noise_pgd(source, x, y, atk, spec, ResampleMode::once));
            }
            baseline_mean += transfer_rate(targets, originals, adv_baseline, labels);
            noise_mean += transfer_rate(targets, originals, adv_noise, labels);
        }
        baseline_mean /= double(ensemble.size());
        noise_mean /= double(ensemble.size());
        improvements.push_back(noise_mean - baseline_mean);
        per_seed += "seed " + std::to_string(seed) + ": " + fmt_double(noise_mean - baseline_mean) +
                    " (baseline " + fmt_double(baseline_mean) + ", noise " +
                    fmt_double(noise_mean) + "); ";
    }
    double mean_improvement = 0.0;
    for (double v : improvements) mean_improvement += v;
    mean_improvement /= double(improvements.size());
    report(7, mean_improvement >= 0.0,
           "mean improvement " + fmt_double(mean_improvement) + " over 5 seeds; " + per_seed);
    CHECK(mean_improvement >= 0.0);
}

TEST_CASE("criterion 8: CLI subcommands are deterministic and use the documented exit codes") {
    REQUIRE_MESSAGE(!g_cli_path.empty(), "pass --cli <path-to-noiseavg-binary>");
    const auto base = scratch_dir("cli");

    const std::string config_text =
        "data.source = blobs\n"
        "data.n_per_class = 40\n"
        "data.dim = 2\n"
        "data.classes = 2\n"
        "data.spread = 0.06\n"
        "data.seed = 7\n"
        "data.train_fraction = 0.5\n"
        "ensemble.members = 3\n"
        "ensemble.layer_dims = 2,8,2\n"
        "ensemble.activation = relu\n"
        "ensemble.learning_rate = 0.1\n"
        "ensemble.epochs = 10\n"
        "ensemble.batch_size = 16\n"
        "ensemble.base_seed = 100\n"
        "attack.epsilon = 0.3\n"
        "attack.step_size = 0.05\n"
        "attack.num_steps = 5\n"
        "attack.noise_kind = uniform\n"
        "attack.noise_sigma = 0.3\n"
        "attack.noise_samples = 2\n"
        "eval.num_points = 10\n";
    const auto config = base / "experiment.cfg";
    write_text_file(config, config_text);

    const std::string common = "--config " + config.string() + " --quiet";
    const auto ensemble_out = base / "train";
    const auto ensemble_dir = ensemble_out / "ensemble";
    const auto attack_out = base / "attack";
    const auto adv_file = attack_out / "adversarial_examples.json";

    struct Step {
        const char* name;
        std::string args;
        std::filesystem::path out;
    };
    const std::vector<Step> steps = {
        {"train-ensemble", "train-ensemble " + common + " --out " + ensemble_out.string(),
         ensemble_out},
        {"attack",
         "attack " + common + " --ensemble " + ensemble_dir.string() + " --out " +
             attack_out.string(),
         attack_out},
        {"eval-transfer",
         "eval-transfer " + common + " --ensemble " + ensemble_dir.string() + " --adv " +
             adv_file.string() + " --out " + (base / "transfer").string(),
         base / "transfer"},
        {"verify-theory",
         "verify-theory " + common + " --ensemble " + ensemble_dir.string() + " --out " +
             (base / "theory").string(),
         base / "theory"},
        {"gradcheck", "gradcheck " + common + " --out " + (base / "gradcheck").string(),
         base / "gradcheck"},
    };

    bool all_deterministic = true;
    std::string detail;
    for (const Step& step : steps) {
        const int first = run_cli(step.args);
        CHECK_MESSAGE(first == 0, step.name, " exited with ", first);
        const auto before = snapshot_dir(step.out);
        const int second = run_cli(step.args);
        CHECK_MESSAGE(second == 0, step.name, " rerun exited with ", second);
        const bool same = snapshot_dir(step.out) == before;
        all_deterministic = all_deterministic && same;
        detail += std::string(step.name) + (same ? " ok; " : " DIFFERS; ");
        CHECK_MESSAGE(same, step.name, " outputs changed between identical runs");
    }

    // exit code contract: 2 for config errors, 3 for runtime errors
    const auto bad_config = base / "bad.cfg";
    write_text_file(bad_config, "data.unknown_key = 1\n");
    const int config_error = run_cli("train-ensemble --config " + bad_config.string());
    CHECK(config_error == 2);
    const int runtime_error =
        run_cli("attack " + common + " --ensemble " + (base / "missing").string());
    CHECK(runtime_error == 3);
    detail += "exit codes (config, runtime) = (" + std::to_string(config_error) + ", " +
              std::to_string(runtime_error) + ")";

    report(8, all_deterministic && config_error == 2 && runtime_error == 3, detail);
}

TEST_CASE("criterion 9: persistence round-trip and IDX fixtures") {
    const auto base = scratch_dir("persist");

    // bit-exact model round-trip after a real training run
    const Dataset ds = gen_gaussian_blobs(60, 2, 2, 0.06, 23);
    TrainConfig tc;
    tc.learning_rate = 0.1;
    tc.epochs = 12;
    tc.batch_size = 16;
    const MlpModel trained = train(init_model({2, 16, 2}, Activation::tanh, 9), ds, tc);
    save_model(trained, base / "model.json");
    const bool roundtrip_exact = load_model(base / "model.json") == trained;
    CHECK(roundtrip_exact);

    // IDX fixture: one 2x2 image {0, 255, 128, 64}
    auto be = [](std::uint32_t v) {
        return std::string{char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
    };
    const std::string img_ok = be(2051) + be(1) + be(2) + be(2) +
                               std::string{char(0), char(255), char(128), char(64)};
    const std::string lab_ok = be(2049) + be(1) + std::string{char(3)};
    write_text_file(base / "img_ok", img_ok);
    write_text_file(base / "lab_ok", lab_ok);
    const Dataset idx = load_idx(base / "img_ok", base / "lab_ok");
    const bool idx_exact =
        idx.size() == 1 &&
        idx.inputs[0].data == std::vector<double>{0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0} &&
        idx.labels[0] == 3;
    CHECK(idx_exact);

    // three malformed fixtures with three distinct errors
    write_text_file(base / "img_badmagic", be(2052) + img_ok.substr(4));
    write_text_file(base / "img_truncated", img_ok.substr(0, img_ok.size() - 2));
    write_text_file(base / "lab_count", be(2049) + be(3) + std::string{char(0), char(1), char(2)});

    bool bad_magic = false, truncated = false, count_mismatch = false;
    try {
        load_idx(base / "img_badmagic", base / "lab_ok");
    } catch (const BadMagicError&) {
        bad_magic = true;
    }
    try {
        load_idx(base / "img_truncated", base / "lab_ok");
    } catch (const TruncatedFileError&) {
        truncated = true;
    }
    try {
        load_idx(base / "img_ok", base / "lab_count");
    } catch (const CountMismatchError&) {
        count_mismatch = true;
    }
    CHECK(bad_magic);
    CHECK(truncated);
    CHECK(count_mismatch);

    const bool ok = roundtrip_exact && idx_exact && bad_magic && truncated && count_mismatch;
    report(9, ok,
           std::string("model round-trip ") + (roundtrip_exact ? "exact" : "INEXACT") +
               ", IDX fixture " + (idx_exact ? "exact" : "WRONG") + ", distinct errors " +
               (bad_magic && truncated && count_mismatch ? "confirmed" : "MISSING"));
}
