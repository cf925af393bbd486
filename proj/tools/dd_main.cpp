// dd: few-step generation for autoregressive token models.
//
// Subcommands drive the pipeline stages end to end:
//   train-teacher -> gen-data -> distill -> sample / eval -> plot
// Every command takes `--config <file>` (dotted key = value lines) plus
// optional `--seed`, `--out <dir>`, `--dry-run`, writes its artifacts
// under the out directory, and drops a provenance manifest with hashes
// of the config, inputs, and outputs.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dd/baselines.hpp"
#include "dd/config.hpp"
#include "dd/eval.hpp"
#include "dd/io.hpp"
#include "dd/neural_teacher.hpp"
#include "dd/sampler.hpp"
#include "dd/student.hpp"
#include "dd/teacher.hpp"
#include "dd/trajgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitMissingInput = 3;
constexpr int kExitFingerprint = 4;
constexpr int kExitNumeric = 5;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    bool dry_run = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "run configuration file")->required();
    cmd->add_option("--seed", args.seed, "override the command's primary seed");
    cmd->add_option("--out", args.out_dir, "output directory (created if missing)");
    cmd->add_flag("--dry-run", args.dry_run, "validate inputs and exit without side effects");
}

void log_line(const std::string& line) { std::cerr << line << "\n"; }

class Manifest {
public:
    Manifest(std::string command, const dd::RunConfig& cfg) {
        data_["command"] = std::move(command);
        data_["config_hash"] = dd::hex64(cfg.content_hash());
        data_["inputs"] = json::object();
        data_["outputs"] = json::object();
    }

    void input(const fs::path& path) {
        data_["inputs"][path.string()] = dd::hex64(dd::hash_file(path));
    }
    void output(const fs::path& path) {
        data_["outputs"][path.string()] = dd::hex64(dd::hash_file(path));
    }

    void write(const fs::path& path) const {
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw dd::IoError("cannot write manifest: " + path.string());
        os << data_.dump(2) << "\n";
    }

private:
    json data_;
};

fs::path require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw dd::ConfigError("config: missing path for " + what);
    fs::path p(path);
    if (!fs::exists(p)) throw dd::IoError(what + " not found: " + path);
    return p;
}

// Classifier-free guidance hook: only meaningful for neural teachers.
// Guided teachers no longer define a normalized sequence joint, so the
// exact-evaluation path refuses it.
void apply_guidance(const dd::RunConfig& cfg, dd::Teacher& teacher) {
    if (!cfg.get_bool("teacher.guidance_enabled", false)) return;
    auto* neural = dynamic_cast<dd::NeuralTeacher*>(&teacher);
    if (!neural)
        throw dd::ConfigError("teacher.guidance_enabled requires a neural teacher");
    neural->set_guidance(cfg.get_double("teacher.guidance_scale", 2.0), true);
    log_line("event=guidance_enabled scale=" +
             std::to_string(cfg.get_double("teacher.guidance_scale", 2.0)));
}

dd::SolverConfig solver_from(const dd::RunConfig& cfg) {
    dd::SolverConfig solver;
    solver.scheme = dd::scheme_from_string(cfg.get_string("solver.scheme", "heun"));
    solver.steps = static_cast<std::uint32_t>(cfg.get_u64("solver.steps", 64));
    solver.t_end = cfg.get_double("solver.t_end", 1.0 - 1e-4);
    solver.rho = cfg.get_double("solver.rho", 7.0);
    solver.validate();
    return solver;
}

// The codebook either comes from a DDCB file or is drawn deterministically
// from domain.codebook_seed ("random").
dd::Codebook codebook_from(const dd::RunConfig& cfg) {
    std::string source = cfg.get_string("domain.codebook", "random");
    if (source == "random") {
        auto vocab = static_cast<std::uint32_t>(cfg.get_u64("domain.vocab"));
        auto dim = static_cast<std::uint32_t>(cfg.get_u64("domain.dim"));
        std::uint64_t seed = cfg.get_u64("domain.codebook_seed", 1);
        return dd::Codebook::random(vocab, dim, seed);
    }
    return dd::Codebook::load_file(require_file(source, "codebook"));
}

std::vector<dd::TokenSeq> load_token_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw dd::IoError("cannot open token dataset: " + path.string());
    std::vector<dd::TokenSeq> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        dd::TokenSeq seq;
        std::uint32_t id;
        while (ls >> id) seq.ids.push_back(id);
        if (!seq.ids.empty()) out.push_back(std::move(seq));
    }
    if (out.empty()) throw dd::IoError("token dataset is empty: " + path.string());
    return out;
}

std::vector<dd::TokenSeq> make_toy_dataset(const std::string& kind, std::uint32_t n,
                                           std::uint32_t vocab, std::uint64_t count,
                                           double stay_prob, std::uint64_t seed) {
    std::vector<dd::TokenSeq> out;
    out.reserve(count);
    dd::Rng rng(seed);
    if (kind == "twosample") {
        for (std::uint64_t i = 0; i < count; ++i) {
            std::uint32_t tok = (rng.next_u64() & 1) ? 1 : 2;
            dd::TokenSeq seq;
            seq.ids.assign(n, tok);
            out.push_back(std::move(seq));
        }
        return out;
    }
    if (kind == "markov") {
        for (std::uint64_t i = 0; i < count; ++i) {
            dd::TokenSeq seq;
            std::uint32_t cur = 1 + static_cast<std::uint32_t>(rng.next_index(vocab));
            seq.ids.push_back(cur);
            for (std::uint32_t j = 1; j < n; ++j) {
                if (rng.next_double() >= stay_prob) {
                    std::uint32_t step =
                        1 + static_cast<std::uint32_t>(rng.next_index(vocab - 1));
                    cur = 1 + (cur - 1 + step) % vocab;
                }
                seq.ids.push_back(cur);
            }
            out.push_back(std::move(seq));
        }
        return out;
    }
    if (kind == "random") {
        for (std::uint64_t i = 0; i < count; ++i) {
            dd::TokenSeq seq;
            for (std::uint32_t j = 0; j < n; ++j)
                seq.ids.push_back(1 + static_cast<std::uint32_t>(rng.next_index(vocab)));
            out.push_back(std::move(seq));
        }
        return out;
    }
    throw dd::ConfigError("teacher.toy: unknown kind '" + kind +
                          "' (expected twosample, markov, or random)");
}

dd::TimestepSchedule schedule_from(const dd::RunConfig& cfg, std::uint32_t n) {
    dd::TimestepSchedule schedule;
    schedule.steps = cfg.get_u32_list("train.schedule", {1});
    if (cfg.has("train.lambda")) {
        std::string raw = cfg.get_string("train.lambda");
        std::istringstream is(raw);
        std::string item;
        while (std::getline(is, item, ',')) {
            if (!item.empty()) schedule.weights.push_back(std::stod(item));
        }
    }
    schedule.validate(n);
    return schedule;
}

int cmd_train_teacher(const CommonArgs& args) {
    dd::RunConfig cfg = dd::RunConfig::load_file(args.config_path);
    std::string kind = cfg.get_string("teacher.kind", "tabular");
    auto vocab = static_cast<std::uint32_t>(cfg.get_u64("domain.vocab"));

    std::vector<dd::TokenSeq> dataset;
    std::optional<fs::path> data_path;
    if (cfg.has("teacher.data")) {
        data_path = require_file(cfg.get_string("teacher.data"), "teacher dataset");
        if (!args.dry_run) dataset = load_token_file(*data_path);
    } else {
        auto n = static_cast<std::uint32_t>(cfg.get_u64("domain.n"));
        std::uint64_t toy_seed = args.seed.value_or(cfg.get_u64("teacher.toy_seed", 1));
        if (!args.dry_run)
            dataset = make_toy_dataset(cfg.get_string("teacher.toy", "markov"), n, vocab,
                                       cfg.get_u64("teacher.toy_count", 1000),
                                       cfg.get_double("teacher.toy_stay_prob", 0.85),
                                       toy_seed);
    }
    if (args.dry_run) {
        log_line("event=dry_run cmd=train-teacher status=ok");
        return kExitOk;
    }

    fs::create_directories(args.out_dir);
    fs::path out_ckpt = fs::path(args.out_dir) / "teacher.ddtc";
    Manifest manifest("train-teacher", cfg);
    if (data_path) manifest.input(*data_path);

    if (kind == "tabular") {
        dd::TabularTeacher teacher =
            dd::fit_tabular(dataset, vocab, cfg.get_double("teacher.alpha", 0.0));
        teacher.save_file(out_ckpt);
        log_line("event=teacher_trained kind=tabular n=" + std::to_string(teacher.seq_len()) +
                 " vocab=" + std::to_string(vocab) +
                 " fingerprint=" + dd::hex64(teacher.fingerprint()));
    } else if (kind == "neural") {
        dd::TeacherTrainConfig tc;
        tc.arch.width = static_cast<std::uint32_t>(cfg.get_u64("teacher.arch.width", 32));
        tc.arch.layers = static_cast<std::uint32_t>(cfg.get_u64("teacher.arch.layers", 2));
        tc.arch.mlp_mult = static_cast<std::uint32_t>(cfg.get_u64("teacher.arch.mlp_mult", 4));
        tc.num_classes = static_cast<std::uint32_t>(cfg.get_u64("teacher.num_classes", 1));
        tc.epochs = static_cast<std::uint32_t>(cfg.get_u64("teacher.epochs", 20));
        tc.batch = static_cast<std::uint32_t>(cfg.get_u64("teacher.batch", 64));
        tc.lr = cfg.get_double("teacher.lr", 1e-3);
        tc.lr_scaled_by_batch = cfg.get_string("teacher.lr_rule", "fixed") == "scaled";
        tc.holdout_fraction = cfg.get_double("teacher.holdout_fraction", 0.1);
        tc.seed = args.seed.value_or(cfg.get_u64("teacher.toy_seed", 1));
        dd::TeacherTrainLog log;
        dd::NeuralTeacher teacher = dd::train_neural_teacher(dataset, vocab, tc, &log);
        for (std::size_t e = 0; e < log.train_loss.size(); ++e)
            log_line("event=epoch stage=train-teacher idx=" + std::to_string(e) +
                     " loss=" + std::to_string(log.train_loss[e]) +
                     " holdout_ce=" + std::to_string(log.holdout_ce[e]));
        teacher.save_file(out_ckpt);
        log_line("event=teacher_trained kind=neural fingerprint=" +
                 dd::hex64(teacher.fingerprint()));
    } else {
        throw dd::ConfigError("teacher.kind must be tabular or neural, got '" + kind + "'");
    }

    manifest.output(out_ckpt);
    manifest.write(fs::path(args.out_dir) / "manifest-train-teacher.json");
    return kExitOk;
}

int cmd_gen_data(const CommonArgs& args) {
    dd::RunConfig cfg = dd::RunConfig::load_file(args.config_path);
    fs::path teacher_path = require_file(cfg.get_string("teacher.checkpoint"), "teacher checkpoint");
    dd::SolverConfig solver = solver_from(cfg);
    std::uint64_t count = cfg.get_u64("dataset.count", 1000);
    std::uint64_t base_seed = args.seed.value_or(cfg.get_u64("dataset.base_seed", 1));
    std::vector<std::uint32_t> conditions = cfg.get_u32_list("dataset.conditions", {});

    if (args.dry_run) {
        (void)codebook_from(cfg);
        log_line("event=dry_run cmd=gen-data status=ok");
        return kExitOk;
    }

    auto teacher = dd::load_teacher_file(teacher_path);
    apply_guidance(cfg, *teacher);
    dd::Codebook cb = codebook_from(cfg);
    if (teacher->vocab() != cb.size())
        throw dd::ConfigError("codebook size " + std::to_string(cb.size()) +
                              " does not match teacher vocab " +
                              std::to_string(teacher->vocab()));

    dd::PairStore store = dd::generate_dataset(*teacher, cb, count, conditions, base_seed,
                                               solver);

    fs::create_directories(args.out_dir);
    fs::path pairs_path = fs::path(args.out_dir) / "pairs.ddpr";
    fs::path cb_path = fs::path(args.out_dir) / "codebook.ddcb";
    store.save_file(pairs_path);
    cb.save_file(cb_path);

    Manifest manifest("gen-data", cfg);
    manifest.input(teacher_path);
    manifest.output(pairs_path);
    manifest.output(cb_path);
    manifest.write(fs::path(args.out_dir) / "manifest-gen-data.json");
    log_line("event=dataset_written pairs=" + std::to_string(store.size()) +
             " path=" + pairs_path.string());
    return kExitOk;
}

int cmd_distill(const CommonArgs& args) {
    dd::RunConfig cfg = dd::RunConfig::load_file(args.config_path);
    fs::path pairs_path = require_file(cfg.get_string("dataset.path"), "pair store");
    fs::path teacher_path = require_file(cfg.get_string("teacher.checkpoint"), "teacher checkpoint");

    if (args.dry_run) {
        (void)codebook_from(cfg);
        log_line("event=dry_run cmd=distill status=ok");
        return kExitOk;
    }

    dd::PairStore store = dd::PairStore::load_file(pairs_path);
    auto teacher = dd::load_teacher_file(teacher_path);
    dd::Codebook cb = codebook_from(cfg);
    dd::TimestepSchedule schedule = schedule_from(cfg, store.seq_len());

    dd::StudentConfig model_cfg;
    model_cfg.arch.width = static_cast<std::uint32_t>(cfg.get_u64("train.arch.width", 48));
    model_cfg.arch.layers = static_cast<std::uint32_t>(cfg.get_u64("train.arch.layers", 2));
    model_cfg.arch.mlp_mult =
        static_cast<std::uint32_t>(cfg.get_u64("train.arch.mlp_mult", 4));
    model_cfg.split_point =
        static_cast<std::uint32_t>(cfg.get_u64("train.split_point", 0));
    model_cfg.loss_w_embed = cfg.get_double("train.loss_w_embed", 1.0);
    model_cfg.loss_w_logits = cfg.get_double("train.loss_w_logits", 0.1);

    dd::StudentTrainConfig train_cfg;
    train_cfg.epochs = static_cast<std::uint32_t>(cfg.get_u64("train.epochs", 20));
    train_cfg.batch = static_cast<std::uint32_t>(cfg.get_u64("train.batch", 64));
    train_cfg.lr = cfg.get_double("train.lr", 1e-3);
    train_cfg.lr_scaled_by_batch = cfg.get_string("train.lr_rule", "fixed") == "scaled";
    train_cfg.weight_decay = cfg.get_double("train.weight_decay", 0.0);
    train_cfg.ema_decay = cfg.get_double("train.ema_decay", 0.9999);
    train_cfg.seed = args.seed.value_or(cfg.get_u64("train.seed", 1));
    train_cfg.log = &std::cerr;

    dd::StudentModel student =
        dd::train_student(store, cb, *teacher, schedule, model_cfg, train_cfg);

    fs::create_directories(args.out_dir);
    fs::path out_ckpt = fs::path(args.out_dir) / "student.ddtc";
    student.save_file(out_ckpt);

    Manifest manifest("distill", cfg);
    manifest.input(pairs_path);
    manifest.input(teacher_path);
    manifest.output(out_ckpt);
    manifest.write(fs::path(args.out_dir) / "manifest-distill.json");
    log_line("event=student_written path=" + out_ckpt.string());
    return kExitOk;
}

int cmd_sample(const CommonArgs& args) {
    dd::RunConfig cfg = dd::RunConfig::load_file(args.config_path);
    fs::path student_path = require_file(cfg.get_string("sample.student"), "student checkpoint");
    std::vector<std::uint32_t> path_steps = cfg.get_u32_list("sample.path", {1});
    std::uint64_t count = cfg.get_u64("sample.count", 16);
    std::uint64_t seed = args.seed.value_or(cfg.get_u64("sample.seed", 1));
    std::optional<std::uint32_t> condition;
    if (cfg.has("sample.condition"))
        condition = static_cast<std::uint32_t>(cfg.get_u64("sample.condition"));
    bool hybrid = cfg.has("sample.t_s");

    if (args.dry_run) {
        (void)codebook_from(cfg);
        log_line("event=dry_run cmd=sample status=ok");
        return kExitOk;
    }

    dd::StudentModel student = dd::StudentModel::load_file(student_path);
    dd::Codebook cb = codebook_from(cfg);
    dd::LogitDecode decode = cfg.get_string("sample.decode", "argmax") == "sample"
                                 ? dd::LogitDecode::sample
                                 : dd::LogitDecode::argmax;

    std::unique_ptr<dd::Teacher> teacher;
    dd::SolverConfig solver = solver_from(cfg);
    if (hybrid) {
        teacher = dd::load_teacher_file(
            require_file(cfg.get_string("teacher.checkpoint"), "teacher checkpoint"));
        apply_guidance(cfg, *teacher);
    }

    fs::create_directories(args.out_dir);
    fs::path samples_path = fs::path(args.out_dir) / "samples.txt";
    std::ofstream os(samples_path, std::ios::trunc);
    if (!os) throw dd::IoError("cannot write samples: " + samples_path.string());

    for (std::uint64_t i = 0; i < count; ++i) {
        dd::Rng rng(dd::split_seed(seed, i));
        dd::Rng decode_rng(dd::split_seed(seed ^ 0x5EEDu, i));
        dd::StudentPredictor predictor(student, cb, decode,
                                       decode == dd::LogitDecode::sample ? &decode_rng
                                                                         : nullptr);
        dd::TokenSeq seq;
        dd::StepReport report;
        if (hybrid) {
            auto t_s = static_cast<std::uint32_t>(cfg.get_u64("sample.t_s"));
            std::uint32_t t_k2 = path_steps.back();
            auto mode = cfg.get_string("sample.variant", "deterministic") == "stochastic"
                            ? dd::HybridTeacherMode::stochastic
                            : dd::HybridTeacherMode::deterministic;
            std::tie(seq, report) = dd::sample_hybrid(predictor, *teacher, cb, solver,
                                                      student.schedule(), t_k2, t_s,
                                                      condition, rng, mode);
        } else {
            dd::SamplePath path{path_steps};
            std::tie(seq, report) =
                dd::sample(predictor, student.schedule(), path, condition, rng);
        }
        os << "seed=" << dd::split_seed(seed, i) << " condition="
           << (condition ? std::to_string(*condition) : "none")
           << " student_calls=" << report.student_calls
           << " teacher_calls=" << report.teacher_calls << " steps=" << report.total()
           << " ids=";
        for (std::size_t j = 0; j < seq.ids.size(); ++j)
            os << (j ? "," : "") << seq.ids[j];
        os << "\n";
    }
    os.close();

    Manifest manifest("sample", cfg);
    manifest.input(student_path);
    manifest.output(samples_path);
    manifest.write(fs::path(args.out_dir) / "manifest-sample.json");
    log_line("event=samples_written count=" + std::to_string(count) +
             " path=" + samples_path.string());
    return kExitOk;
}

int cmd_eval(const CommonArgs& args) {
    dd::RunConfig cfg = dd::RunConfig::load_file(args.config_path);
    fs::path teacher_path = require_file(cfg.get_string("teacher.checkpoint"), "teacher checkpoint");
    std::uint64_t samples = cfg.get_u64("eval.samples", 20000);
    std::uint64_t seed = args.seed.value_or(cfg.get_u64("eval.seed", 1));
    std::optional<std::uint32_t> condition;
    if (cfg.has("eval.condition"))
        condition = static_cast<std::uint32_t>(cfg.get_u64("eval.condition"));

    if (args.dry_run) {
        (void)codebook_from(cfg);
        log_line("event=dry_run cmd=eval status=ok");
        return kExitOk;
    }

    auto teacher = dd::load_teacher_file(teacher_path);
    if (cfg.get_bool("teacher.guidance_enabled", false))
        throw dd::ConfigError(
            "eval scores against the exact sequence joint, which a guided teacher "
            "does not define; disable teacher.guidance_enabled");
    dd::Codebook cb = codebook_from(cfg);
    dd::SolverConfig solver = solver_from(cfg);

    std::optional<dd::StudentModel> student;
    if (cfg.has("eval.student"))
        student = dd::StudentModel::load_file(
            require_file(cfg.get_string("eval.student"), "student checkpoint"));

    // Each system owns a seeded rng stream; stream index is stable so
    // adding systems never reshuffles earlier ones.
    std::vector<std::unique_ptr<dd::Rng>> rngs;
    auto next_rng = [&]() -> dd::Rng& {
        rngs.push_back(std::make_unique<dd::Rng>(dd::split_seed(seed, rngs.size())));
        return *rngs.back();
    };

    std::vector<dd::SystemUnderTest> systems;
    const std::uint32_t n = teacher->seq_len();

    std::string requested = cfg.get_string("eval.systems", "teacher,onestep-star");
    std::istringstream req(requested);
    std::string name;
    dd::MarginalTable marginals =
        dd::marginal_table_from_joint(dd::exact_joint(*teacher, condition));

    while (std::getline(req, name, ',')) {
        if (name.empty()) continue;
        if (name == "teacher") {
            dd::Rng& rng = next_rng();
            systems.push_back({"teacher", n, [&teacher_ref = *teacher, condition, &rng]() {
                                   return dd::ar_sample(teacher_ref, condition, rng);
                               }});
        } else if (name == "onestep-star") {
            dd::Rng& rng = next_rng();
            systems.push_back({"onestep-star", 1, [marginals, &rng]() {
                                   return dd::sample_onestep_star(marginals, rng);
                               }});
        } else if (name.rfind("skip-", 0) == 0) {
            auto n_skip = static_cast<std::uint32_t>(std::stoul(name.substr(5)));
            dd::Rng& rng = next_rng();
            systems.push_back({name, n - n_skip,
                               [&teacher_ref = *teacher, marginals, n_skip, condition, &rng]() {
                                   return dd::skip_n_sample(teacher_ref, marginals, n_skip,
                                                            condition, rng);
                               }});
        } else if (name == "student-1step" || name == "student-2step") {
            if (!student) throw dd::ConfigError("eval.systems needs eval.student for " + name);
            bool two = name == "student-2step";
            if (two && student->schedule().count() < 2)
                throw dd::ConfigError("student schedule has no second timestep");
            dd::SamplePath path;
            path.timesteps = two ? std::vector<std::uint32_t>{1, student->schedule().steps[1]}
                                 : std::vector<std::uint32_t>{1};
            dd::Rng& rng = next_rng();
            systems.push_back(
                {name, path.timesteps.size(), [&student_ref = *student, &cb, path, condition,
                                               &rng]() {
                     dd::StudentPredictor predictor(student_ref, cb);
                     return dd::sample(predictor, student_ref.schedule(), path, condition, rng)
                         .first;
                 }});
        } else if (name == "hybrid") {
            if (!student) throw dd::ConfigError("eval.systems needs eval.student for hybrid");
            if (student->schedule().count() < 2)
                throw dd::ConfigError("student schedule has no second timestep");
            std::uint32_t t_k2 = student->schedule().steps[1];
            auto t_s = static_cast<std::uint32_t>(cfg.get_u64("eval.hybrid_t_s"));
            dd::Rng& rng = next_rng();
            systems.push_back({"hybrid", 2ull + (t_k2 - t_s),
                               [&student_ref = *student, &teacher_ref = *teacher, &cb, solver,
                                t_k2, t_s, condition, &rng]() {
                                   dd::StudentPredictor predictor(student_ref, cb);
                                   return dd::sample_hybrid(predictor, teacher_ref, cb, solver,
                                                            student_ref.schedule(), t_k2, t_s,
                                                            condition, rng)
                                       .first;
                               }});
        } else {
            throw dd::ConfigError("eval.systems: unknown system '" + name + "'");
        }
    }

    dd::EvalReport report = dd::evaluate_systems(*teacher, condition, systems, samples);

    fs::create_directories(args.out_dir);
    fs::path kv_path = fs::path(args.out_dir) / "report.kv";
    fs::path csv_path = fs::path(args.out_dir) / "results.csv";
    {
        std::ofstream kv(kv_path, std::ios::trunc);
        report.write_kv(kv);
        std::ofstream csv(csv_path, std::ios::trunc);
        report.write_csv(csv);
    }
    std::ostringstream kv_log;
    report.write_kv(kv_log);
    std::istringstream kv_lines(kv_log.str());
    std::string line;
    while (std::getline(kv_lines, line)) log_line("event=eval " + line);

    Manifest manifest("eval", cfg);
    manifest.input(teacher_path);
    if (cfg.has("eval.student")) manifest.input(cfg.get_string("eval.student"));
    manifest.output(kv_path);
    manifest.output(csv_path);
    manifest.write(fs::path(args.out_dir) / "manifest-eval.json");
    return kExitOk;
}

struct PlotRow {
    std::string system;
    double steps = 0.0;
    double tv = 0.0;
};

int cmd_plot(const CommonArgs& args) {
    dd::RunConfig cfg = dd::RunConfig::load_file(args.config_path);
    std::string inputs = cfg.get_string("plot.inputs");
    std::string title = cfg.get_string("plot.title", "distribution distance vs steps");

    std::vector<PlotRow> rows;
    std::vector<fs::path> input_paths;
    std::istringstream is(inputs);
    std::string item;
    while (std::getline(is, item, ',')) {
        if (item.empty()) continue;
        fs::path p = require_file(item, "plot input");
        input_paths.push_back(p);
        if (args.dry_run) continue;
        std::ifstream csv(p);
        std::string line;
        bool header = true;
        while (std::getline(csv, line)) {
            if (header) {
                header = false;
                continue;
            }
            std::istringstream ls(line);
            PlotRow row;
            std::string steps, tv, rest;
            if (!std::getline(ls, row.system, ',')) continue;
            if (!std::getline(ls, steps, ',')) continue;
            if (!std::getline(ls, tv, ',')) continue;
            row.steps = std::stod(steps);
            row.tv = std::stod(tv);
            rows.push_back(row);
        }
    }
    if (args.dry_run) {
        log_line("event=dry_run cmd=plot status=ok");
        return kExitOk;
    }
    if (rows.empty()) throw dd::IoError("plot: no data rows in inputs");

    std::sort(rows.begin(), rows.end(),
              [](const PlotRow& a, const PlotRow& b) { return a.steps < b.steps; });

    fs::create_directories(args.out_dir);
    fs::path csv_path = fs::path(args.out_dir) / "plot.csv";
    {
        std::ofstream csv(csv_path, std::ios::trunc);
        csv << "system,steps,tv_joint\n";
        for (const PlotRow& row : rows)
            csv << row.system << "," << row.steps << "," << row.tv << "\n";
    }

    // Minimal SVG: log-ish x (steps), linear y (TV), one polyline through
    // all rows plus labeled markers.
    const double width = 640, height = 420, ml = 70, mr = 30, mt = 50, mb = 60;
    double max_steps = 1, max_tv = 0.0;
    for (const PlotRow& row : rows) {
        max_steps = std::max(max_steps, row.steps);
        max_tv = std::max(max_tv, row.tv);
    }
    if (max_tv <= 0) max_tv = 1.0;
    max_tv *= 1.15;
    auto x_of = [&](double steps) {
        return ml + (std::log(std::max(1.0, steps)) / std::log(std::max(2.0, max_steps))) *
                        (width - ml - mr);
    };
    auto y_of = [&](double tv) { return height - mb - (tv / max_tv) * (height - mt - mb); };

    fs::path svg_path = fs::path(args.out_dir) / "plot.svg";
    std::ofstream svg(svg_path, std::ios::trunc);
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
        << height << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<text x='" << width / 2 << "' y='25' text-anchor='middle' font-size='16'>" << title
        << "</text>\n";
    svg << "<line x1='" << ml << "' y1='" << height - mb << "' x2='" << width - mr << "' y2='"
        << height - mb << "' stroke='black'/>\n";
    svg << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << height - mb
        << "' stroke='black'/>\n";
    svg << "<text x='" << width / 2 << "' y='" << height - 15
        << "' text-anchor='middle' font-size='12'>model invocations per sample</text>\n";
    svg << "<text x='18' y='" << height / 2
        << "' text-anchor='middle' font-size='12' transform='rotate(-90 18 " << height / 2
        << ")'>joint TV distance</text>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        double tv = max_tv * tick / 4.0;
        svg << "<text x='" << ml - 8 << "' y='" << y_of(tv) + 4
            << "' text-anchor='end' font-size='10'>" << std::round(tv * 1000) / 1000.0
            << "</text>\n";
        svg << "<line x1='" << ml - 4 << "' y1='" << y_of(tv) << "' x2='" << ml << "' y2='"
            << y_of(tv) << "' stroke='black'/>\n";
    }
    svg << "<polyline fill='none' stroke='steelblue' stroke-width='1.5' points='";
    for (const PlotRow& row : rows) svg << x_of(row.steps) << "," << y_of(row.tv) << " ";
    svg << "'/>\n";
    for (const PlotRow& row : rows) {
        svg << "<circle cx='" << x_of(row.steps) << "' cy='" << y_of(row.tv)
            << "' r='3.5' fill='firebrick'/>\n";
        svg << "<text x='" << x_of(row.steps) + 6 << "' y='" << y_of(row.tv) - 6
            << "' font-size='10'>" << row.system << " (" << row.steps << ")</text>\n";
    }
    svg << "</svg>\n";
    svg.close();

    Manifest manifest("plot", cfg);
    for (const fs::path& p : input_paths) manifest.input(p);
    manifest.output(csv_path);
    manifest.output(svg_path);
    manifest.write(fs::path(args.out_dir) / "manifest-plot.json");
    log_line("event=plot_written path=" + svg_path.string());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"few-step generation for autoregressive token models"};
    app.require_subcommand(1);

    std::map<std::string, CommonArgs> args;
    std::map<std::string, std::function<int(const CommonArgs&)>> handlers{
        {"train-teacher", cmd_train_teacher}, {"gen-data", cmd_gen_data},
        {"distill", cmd_distill},             {"sample", cmd_sample},
        {"eval", cmd_eval},                   {"plot", cmd_plot},
    };
    std::map<std::string, std::string> descriptions{
        {"train-teacher", "fit or train the next-token teacher"},
        {"gen-data", "generate the noise/data pair dataset"},
        {"distill", "train the few-step student from a pair store"},
        {"sample", "draw sequences from a trained student"},
        {"eval", "score systems against the exact teacher joint"},
        {"plot", "render quality-vs-steps curves from eval CSVs"},
    };
    for (auto& [name, handler] : handlers) {
        CLI::App* cmd = app.add_subcommand(name, descriptions[name]);
        add_common(cmd, args[name]);
    }

    CLI11_PARSE(app, argc, argv);

    std::string chosen = app.get_subcommands().front()->get_name();
    try {
        return handlers[chosen](args[chosen]);
    } catch (const dd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const dd::FingerprintError& e) {
        std::cerr << "fingerprint error: " << e.what() << "\n";
        return kExitFingerprint;
    } catch (const dd::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitMissingInput;
    } catch (const dd::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
}
