// Runs every stated behavioural requirement end to end and prints one
// PASS/FAIL line per criterion. Exits nonzero if any line fails. Budgeted
// requirements time themselves; everything runs on one thread.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "kpshift/arese.hpp"
#include "kpshift/errors.hpp"
#include "kpshift/gradcheck.hpp"
#include "kpshift/head.hpp"
#include "kpshift/rng.hpp"
#include "kpshift/synth.hpp"
#include "kpshift/tensor_io.hpp"
#include "kpshift/threads.hpp"
#include "kpshift/train.hpp"
#include "../../src/ref/reference.hpp"

namespace fs = std::filesystem;
using namespace kpshift;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void check(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void run_criterion(int index, const char* name, const std::function<std::string()>& body) {
    const auto t0 = Clock::now();
    std::string detail;
    bool ok = true;
    std::string why;
    try {
        detail = body();
    } catch (const std::exception& e) {
        ok = false;
        why = e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (ok) {
        std::printf("[PASS] %d. %s (%.1f s)%s%s\n", index, name, secs,
                    detail.empty() ? "" : " -- ", detail.c_str());
    } else {
        ++g_failures;
        std::printf("[FAIL] %d. %s (%.1f s)\n       %s\n", index, name, secs, why.c_str());
    }
    std::fflush(stdout);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    check(a.dims() == b.dims(), "tensor shape mismatch between kernel and reference");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Tensor random_tensor(std::vector<std::size_t> dims, Rng& rng, double lo = -2.0,
                     double hi = 2.0) {
    Tensor t = Tensor::zeros(std::move(dims));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

SeparationNet random_net(std::size_t channels, std::size_t k, Rng& rng) {
    SeparationNet net = make_separation_net(channels, k);
    for (Tensor* t : {&net.w1, &net.b1, &net.w2, &net.b2})
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = rng.uniform(-1.0, 1.0);
    return net;
}

// ---- subprocess plumbing for the determinism criterion ----

const fs::path kWork = fs::temp_directory_path() / "kpshift_acceptance";

int run_cli(const std::string& args, const fs::path& stdout_file) {
    const std::string cmd = std::string(KPSHIFT_CLI_PATH) + " " + args + " > " +
                            stdout_file.string() + " 2> /dev/null";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    check(in.good(), "cannot read " + p.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

void expect_same_bytes(const fs::path& a, const fs::path& b, const std::string& what) {
    check(read_bytes(a) == read_bytes(b), what + " differ between identical runs");
}

// CSV with the trailing (wall time) field of every row removed.
std::string strip_last_field(const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) {
        const std::size_t comma = line.rfind(',');
        out += line.substr(0, comma) + "\n";
    }
    return out;
}

// ---- criteria ----

std::string shape_law() {
    KpsemConfig cfg;
    cfg.k = 2;  // 4 regions
    cfg.sets = 8;
    cfg.embed_dim = 24;
    Rng rng(1);
    const Tensor f = random_tensor({384, 8, 14, 14}, rng);
    const KpsemParams params = init_kpsem_params(384, cfg, 7);
    const auto t0 = Clock::now();
    const Tensor y = kpsem_forward(f, params, cfg);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    check(y.rank() == 1, "expected a flat feature, got rank " + std::to_string(y.rank()));
    check(y.extent(0) == 672,
          "384ch/8f/14x14 with K=4 G=8 d_e=24 must give 672 features, got " +
              std::to_string(y.extent(0)));
    check(secs < 1.0, "single forward took " + num(secs) + " s, budget is 1 s");
    return "672 features in " + num(secs) + " s";
}

std::string oracle_equivalence() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        Rng rng(seed);
        const std::size_t c = 1 + rng.below(4);
        const std::size_t t = 2 + rng.below(3);
        const std::size_t h = 2 + rng.below(7);
        const std::size_t w = 2 + rng.below(7);
        const std::size_t k = rng.below(2) ? 2 : 1;
        const std::size_t sets = 1 + rng.below(2);

        AreseConfig acfg;
        acfg.k = k;
        acfg.normalize_shifts = rng.below(2) == 1;
        const Tensor f = random_tensor({c, t, h, w}, rng);
        const SeparationNet net = random_net(c, k, rng);
        worst = std::max(worst, max_abs_diff(arese_forward(f, net, acfg),
                                             ref::arese_forward(f, net, acfg)));

        KpsemConfig kcfg;
        kcfg.k = k;
        kcfg.sets = sets;
        kcfg.embed_dim = 4 * (1 + rng.below(2));
        kcfg.epsilon = 0.1;
        const Tensor f4 = random_tensor({4, t, h, w}, rng);
        const KpsemParams params = init_kpsem_params(4, kcfg, seed * 77 + 1);
        worst = std::max(worst, max_abs_diff(kpsem_forward(f4, params, kcfg),
                                             ref::kpsem_forward(f4, params, kcfg)));
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    check(worst <= 1e-12,
          "kernel and naive reference disagree by " + num(worst) + " (limit 1e-12)");
    check(secs < 30.0, "100-seed comparison took " + num(secs) + " s, budget is 30 s");
    return "100 seeds, worst |diff| " + num(worst);
}

std::string weight_normalization() {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
        Rng rng(seed * 13 + 5);
        const std::size_t c = 1 + rng.below(3);
        const std::size_t t = 2 + rng.below(3);
        const std::size_t h = 3 + rng.below(6);
        const std::size_t w = 3 + rng.below(6);
        AreseConfig cfg;
        cfg.k = rng.below(2) ? 2 : 1;
        const Tensor f = random_tensor({c, t, h, w}, rng);
        const SeparationNet net = random_net(c, cfg.k, rng);
        const AreseStages st = arese_run(f, net, cfg);
        const std::size_t regions = cfg.k * cfg.k;
        for (std::size_t a = 0; a < regions; ++a)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i + 1 < t; ++i) {
                    double sum = 0.0;
                    for (std::size_t b = 0; b < regions; ++b)
                        sum += st.shift_weights.at({a, b, ch, i});
                    worst = std::max(worst, std::abs(sum - 1.0));
                }
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i + 1 < t; ++i) {
                double sum = 0.0;
                for (std::size_t r = 0; r < regions; ++r)
                    sum += st.regional_weights.at({r, ch, i});
                worst = std::max(worst, std::abs(sum - 1.0));
            }
    }
    check(worst <= 1e-6, "weight rows drift from 1 by " + num(worst) + " (limit 1e-6)");
    return "1000 instances, worst |sum-1| " + num(worst);
}

std::string translation_identity() {
    const SeparationNet net = make_separation_net(1, 1);
    AreseConfig cfg;
    cfg.k = 1;
    for (int dr = -2; dr <= 3; ++dr) {
        for (int dc = -2; dc <= 3; ++dc) {
            Tensor f = Tensor::zeros({1, 3, 16, 16});
            for (int t = 0; t < 3; ++t)
                f.at({0, static_cast<std::size_t>(t), static_cast<std::size_t>(7 + dr * t),
                      static_cast<std::size_t>(7 + dc * t)}) = 1.0;
            const AreseStages st = arese_run(f, net, cfg);
            for (std::size_t i = 0; i < 2; ++i) {
                const double sr = st.shifts.at({0, 0, i, 0});
                const double sc = st.shifts.at({0, 0, i, 1});
                check(sr == static_cast<double>(dr) && sc == static_cast<double>(dc),
                      "peak moved by (" + std::to_string(dr) + "," + std::to_string(dc) +
                          ") but shift came out (" + num(sr) + "," + num(sc) + ")");
            }
        }
    }
    return "shift equals displacement on the full 6x6 grid, exact";
}

std::string gradient_checks() {
    const auto t0 = Clock::now();
    KpsemConfig cfg;  // 4 regions, 4 sets, d_e 8
    const SoftConfig soft;
    double worst_soft = 0.0, worst_hard = 0.0;
    bool saw_zero_blocks = false;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const GradCheckReport rs = gradcheck_kpsem(cfg, Mode::Soft, soft, seed);
        check(rs.margins_ok, "soft run for seed " + std::to_string(seed) +
                                 " could not establish argmax margins");
        check(rs.all_pass(), "soft-mode mismatch at seed " + std::to_string(seed) +
                                 ", worst rel err " + num(rs.max_rel_err()));
        worst_soft = std::max(worst_soft, rs.max_rel_err());

        const GradCheckReport rh = gradcheck_kpsem(cfg, Mode::Hard, soft, seed);
        check(rh.margins_ok, "hard run for seed " + std::to_string(seed) +
                                 " could not establish argmax margins");
        check(rh.all_pass(), "hard-mode mismatch at seed " + std::to_string(seed) +
                                 ", worst rel err " + num(rh.max_rel_err()));
        worst_hard = std::max(worst_hard, rh.max_rel_err());
        for (const GradCheckBlock& b : rh.blocks) saw_zero_blocks |= b.zero_by_design;
    }
    check(saw_zero_blocks, "hard mode never excluded the separation nets");
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    check(secs < 120.0, "40 reports took " + num(secs) + " s, budget is 2 min");
    return "20 seeds per mode, worst rel err soft " + num(worst_soft) + " hard " +
           num(worst_hard);
}

// Criteria 6 and 7 share one dataset and the default-configuration run
// (seed 1, 30 epochs, 4 regions, 4 sets).
SyntheticSplits* full_splits() {
    static SyntheticSplits splits = [] {
        SyntheticSpec spec;
        return generate_splits(spec, 2000, 400, 1);
    }();
    return &splits;
}

double g_baseline_acc = -1.0;
std::size_t g_baseline_params = 0;

void run_baseline() {
    TrainConfig cfg;  // defaults: lr 0.005, momentum 0.9, batch 32, 30 epochs
    cfg.seed = 1;
    const SyntheticSplits* s = full_splits();
    const TrainResult res = train(s->train, s->test, cfg);
    g_baseline_acc = res.trace.back().test_acc;
    g_baseline_params = res.model.param_count();
}

std::string end_to_end_learning() {
    const auto t0 = Clock::now();
    const SyntheticSplits* s = full_splits();
    if (g_baseline_acc < 0.0) run_baseline();
    check(g_baseline_acc >= 0.90, "shift features reached only " + num(g_baseline_acc) +
                                      " test accuracy, need 0.90");

    TrainConfig off;
    off.seed = 1;
    off.use_kpsem = false;
    const double without = train(s->train, s->test, off).trace.back().test_acc;
    check(without >= 0.15 && without <= 0.35,
          "position-free control landed at " + num(without) + ", expected in [0.15, 0.35]");

    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    check(secs < 900.0, "both runs took " + num(secs) + " s, budget is 15 min");
    return "seed 1: with shifts " + num(g_baseline_acc) + ", control " + num(without);
}

std::string ablations() {
    const SyntheticSplits* s = full_splits();
    if (g_baseline_acc < 0.0) run_baseline();

    struct Run {
        std::size_t k, sets;
        double acc;
        std::size_t params;
    };
    Run k1{1, 4, 0.0, 0};
    Run g1{2, 1, 0.0, 0};
    for (Run* r : {&k1, &g1}) {
        TrainConfig cfg;
        cfg.seed = 1;
        cfg.k = r->k;
        cfg.sets = r->sets;
        const TrainResult res = train(s->train, s->test, cfg);
        r->acc = res.trace.back().test_acc;
        r->params = res.model.param_count();
    }

    std::string csv = "param,value,test_acc,param_count\n";
    char line[128];
    std::snprintf(line, sizeof line, "K,1,%.6f,%zu\nK,4,%.6f,%zu\n", k1.acc, k1.params,
                  g_baseline_acc, g_baseline_params);
    csv += line;
    std::snprintf(line, sizeof line, "G,1,%.6f,%zu\nG,4,%.6f,%zu\n", g1.acc, g1.params,
                  g_baseline_acc, g_baseline_params);
    csv += line;
    write_text("ablation.csv", csv);

    check(g_baseline_acc >= k1.acc - 0.02, "4 regions scored " + num(g_baseline_acc) +
                                               ", more than 0.02 below 1 region at " +
                                               num(k1.acc));
    check(g_baseline_acc >= g1.acc - 0.02, "4 sets scored " + num(g_baseline_acc) +
                                               ", more than 0.02 below 1 set at " +
                                               num(g1.acc));
    return "K1 " + num(k1.acc) + " K4 " + num(g_baseline_acc) + " G1 " + num(g1.acc) + " G4 " +
           num(g_baseline_acc) + ", table in ablation.csv";
}

std::string cli_determinism() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    const fs::path golden = KPSHIFT_GOLDEN_DIR;

    // synth twice
    check(run_cli("synth --class right --seed 4 --out " + (kWork / "r1.kpst").string(),
                  kWork / "synth1.txt") == 0,
          "synth exited nonzero");
    check(run_cli("synth --class right --seed 4 --out " + (kWork / "r2.kpst").string(),
                  kWork / "synth2.txt") == 0,
          "synth exited nonzero");
    expect_same_bytes(kWork / "r1.kpst", kWork / "r2.kpst", "synth clips");
    expect_same_bytes(kWork / "synth1.txt", kWork / "synth2.txt", "synth stdout");

    // forward twice on a written feature tensor
    {
        Rng rng(11);
        tensor_write(random_tensor({8, 4, 6, 6}, rng), (kWork / "feat.kpst").string());
    }
    for (int i = 1; i <= 2; ++i) {
        check(run_cli("forward --threads 1 --input " + (kWork / "feat.kpst").string() +
                          " --out " + (kWork / ("y" + std::to_string(i) + ".kpst")).string(),
                      kWork / ("fwd" + std::to_string(i) + ".txt")) == 0,
              "forward exited nonzero");
    }
    expect_same_bytes(kWork / "y1.kpst", kWork / "y2.kpst", "forward outputs");
    expect_same_bytes(kWork / "fwd1.txt", kWork / "fwd2.txt", "forward stdout");

    // gradcheck twice plus the golden report
    for (int i = 1; i <= 2; ++i) {
        check(run_cli("gradcheck --mode soft --seed 3 --out " +
                          (kWork / ("gc" + std::to_string(i) + ".txt")).string(),
                      kWork / ("gcout" + std::to_string(i) + ".txt")) == 0,
              "gradcheck exited nonzero");
    }
    expect_same_bytes(kWork / "gc1.txt", kWork / "gc2.txt", "gradcheck reports");
    check(read_bytes(kWork / "gc1.txt") == read_bytes(golden / "gradcheck_soft_seed3.txt"),
          "gradcheck report drifted from tests/golden/gradcheck_soft_seed3.txt");

    // viz twice plus the golden scene
    write_text(kWork / "viz.cfg", "K = 1\nG = 1\n");
    for (int i = 1; i <= 2; ++i) {
        check(run_cli("viz --config " + (kWork / "viz.cfg").string() + " --video " +
                          (kWork / "r1.kpst").string() + " --out " +
                          (kWork / ("v" + std::to_string(i) + ".svg")).string(),
                      kWork / ("vout" + std::to_string(i) + ".txt")) == 0,
              "viz exited nonzero");
    }
    expect_same_bytes(kWork / "v1.svg", kWork / "v2.svg", "svg scenes");
    check(read_bytes(kWork / "v1.svg") == read_bytes(golden / "right_seed4_k1.svg"),
          "svg scene drifted from tests/golden/right_seed4_k1.svg");

    // tiny train twice: metrics, stdout and every checkpoint byte
    write_text(kWork / "train.cfg",
               "train_samples = 48\ntest_samples = 16\nepochs = 2\nbatch = 16\nseed = 1\n");
    for (int i = 1; i <= 2; ++i) {
        const std::string n = std::to_string(i);
        check(run_cli("train --threads 1 --config " + (kWork / "train.cfg").string() +
                          " --out " + (kWork / ("ck" + n)).string() + " --metrics " +
                          (kWork / ("m" + n + ".csv")).string(),
                      kWork / ("tout" + n + ".txt")) == 0,
              "train exited nonzero");
    }
    expect_same_bytes(kWork / "m1.csv", kWork / "m2.csv", "metrics files");
    expect_same_bytes(kWork / "tout1.txt", kWork / "tout2.txt", "train stdout");
    for (const auto& entry : fs::directory_iterator(kWork / "ck1"))
        expect_same_bytes(entry.path(), kWork / "ck2" / entry.path().filename(),
                          "checkpoint files " + entry.path().filename().string());

    // sweep twice; the wall-time column is the one sanctioned nondeterminism
    write_text(kWork / "sweep.cfg",
               "train_samples = 24\ntest_samples = 8\nepochs = 1\nbatch = 8\nseed = 1\n");
    for (int i = 1; i <= 2; ++i) {
        const std::string n = std::to_string(i);
        check(run_cli("sweep --config " + (kWork / "sweep.cfg").string() +
                          " --param K --values 1,4 --out " +
                          (kWork / ("s" + n + ".csv")).string(),
                      kWork / ("sout" + n + ".txt")) == 0,
              "sweep exited nonzero");
    }
    check(strip_last_field(read_bytes(kWork / "s1.csv")) ==
              strip_last_field(read_bytes(kWork / "s2.csv")),
          "sweep rows differ between identical runs beyond the wall-time column");

    return "six commands byte-stable, two golden files matched";
}

}  // namespace

int main() {
    unsetenv("KPSHIFT_THREADS");
    apply_thread_count(1);
    std::printf("acceptance: single thread, CLI at %s\n", KPSHIFT_CLI_PATH);

    run_criterion(1, "flagship shape law and forward latency", shape_law);
    run_criterion(2, "kernels match the naive reference", oracle_equivalence);
    run_criterion(3, "shift and regional weights are normalized", weight_normalization);
    run_criterion(4, "pure translation reproduces its displacement", translation_identity);
    run_criterion(5, "analytic gradients match finite differences", gradient_checks);
    run_criterion(6, "shift features separate the motion classes", end_to_end_learning);
    run_criterion(7, "region and set counts hold up in ablation", ablations);
    run_criterion(8, "every command is byte-reproducible", cli_determinism);

    if (g_failures == 0) {
        std::printf("all 8 criteria passed\n");
        return 0;
    }
    std::printf("%d of 8 criteria failed\n", g_failures);
    return 1;
}
