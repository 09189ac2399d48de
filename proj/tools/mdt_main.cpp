#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "metadet/config.hpp"
#include "metadet/eval.hpp"
#include "metadet/io.hpp"
#include "metadet/meta.hpp"
#include "metadet/synth.hpp"
#include "metadet/tracker.hpp"

namespace fs = std::filesystem;
using namespace metadet;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::vector<std::string> sets;
    int64_t seed = -1;  // -1: not given on the command line
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "key=value config file");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "RNG seed (overrides config)");
    cmd->add_option("--set", args.sets, "extra key=value override, repeatable");
}

RunConfig build_config(const CommonArgs& args,
                       std::vector<std::pair<std::string, std::string>> extra = {}) {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& kv : args.sets) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (args.seed >= 0) overrides.emplace_back("seed", std::to_string(args.seed));
    for (auto& kv : extra) overrides.push_back(std::move(kv));
    return make_run_config(args.config_path, overrides);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::invalid_argument("cannot open '" + path.string() + "' for writing");
    os << text;
}

// A dataset directory holds seq_* subdirectories; a single sequence
// directory holds meta.txt directly.
std::vector<std::pair<std::string, Sequence>> load_sequences(const std::string& dir) {
    std::vector<std::pair<std::string, Sequence>> out;
    if (fs::exists(fs::path(dir) / "meta.txt")) {
        out.emplace_back(fs::path(dir).filename().string(), import_sequence(dir));
        return out;
    }
    std::vector<fs::path> subdirs;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && fs::exists(e.path() / "meta.txt")) subdirs.push_back(e.path());
    std::sort(subdirs.begin(), subdirs.end());
    for (const auto& p : subdirs) out.emplace_back(p.filename().string(), import_sequence(p.string()));
    if (out.empty()) throw std::invalid_argument("no sequences found under '" + dir + "'");
    return out;
}

std::string train_log_text(const std::vector<TrainRecord>& log) {
    std::ostringstream os;
    os.precision(17);
    os << "iteration epoch outer_loss wall_ms\n";
    for (const auto& r : log)
        os << r.iteration << " " << r.epoch << " " << r.outer_loss << " " << r.wall_ms << "\n";
    return os.str();
}

TaskSource dataset_task_source(std::shared_ptr<std::vector<Sequence>> pool, const RunConfig& cfg) {
    SynthConfig synth = cfg.synth;
    uint64_t seed = cfg.seed;
    int64_t input = cfg.detector.input_size;
    return [pool, synth, seed, input](int64_t iteration, int64_t count) {
        Rng rng(Rng::mix(seed, 0x7461736bull + static_cast<uint64_t>(iteration)));
        std::vector<Task> tasks;
        for (int64_t i = 0; i < count; ++i) tasks.push_back(sample_task(*pool, synth, input, rng));
        return tasks;
    };
}

int cmd_gen(const CommonArgs& args) {
    RunConfig cfg = build_config(args);
    fs::create_directories(args.out_dir);
    for (int64_t i = 0; i < cfg.num_sequences; ++i) {
        Sequence seq = generate_sequence(cfg.synth, i);
        char name[32];
        std::snprintf(name, sizeof(name), "seq_%04lld", static_cast<long long>(i));
        export_sequence((fs::path(args.out_dir) / name).string(), seq);
    }
    write_text(fs::path(args.out_dir) / "gen_config.txt", run_config_text(cfg));
    return 0;
}

int cmd_metatrain(const CommonArgs& args, const std::string& data_dir, int64_t resume_epoch) {
    RunConfig cfg = build_config(args);
    fs::create_directories(args.out_dir);
    auto pool = std::make_shared<std::vector<Sequence>>();
    for (auto& [name, seq] : load_sequences(data_dir)) pool->push_back(std::move(seq));

    ParamSet init = init_detector_params(cfg.detector, cfg.meta.alpha_init, cfg.seed);
    AdamState adam;
    int64_t start_iteration = 0;
    if (resume_epoch >= 0) {
        char ck[64];
        std::snprintf(ck, sizeof(ck), "checkpoint_epoch_%03lld.ckpt",
                      static_cast<long long>(resume_epoch));
        auto [det, params] = load_checkpoint((fs::path(args.out_dir) / ck).string());
        init = std::move(params);
        adam = load_adam_state((fs::path(args.out_dir) / (std::string(ck) + ".adam")).string());
        start_iteration = (resume_epoch + 1) * cfg.meta.iterations_per_epoch;
    }

    std::string out = args.out_dir;
    DetectorConfig det = cfg.detector;
    EpochHook hook = [out, det](int64_t epoch, const ParamSet& p, const AdamState& a) {
        char ck[64];
        std::snprintf(ck, sizeof(ck), "checkpoint_epoch_%03lld.ckpt",
                      static_cast<long long>(epoch));
        save_checkpoint((fs::path(out) / ck).string(), det, p);
        save_adam_state((fs::path(out) / (std::string(ck) + ".adam")).string(), a);
    };

    TrainResult res = meta_train(cfg.detector, cfg.meta, dataset_task_source(pool, cfg), init,
                                 start_iteration, hook, adam);
    save_checkpoint((fs::path(out) / "checkpoint_final.ckpt").string(), cfg.detector, res.params);
    save_adam_state((fs::path(out) / "checkpoint_final.ckpt.adam").string(), res.adam);
    write_text(fs::path(out) / "train_log.txt", train_log_text(res.log));
    std::ostringstream stats;
    stats << "second_order_steps=" << res.second_order_steps << "\n";
    write_text(fs::path(out) / "train_stats.txt", stats.str());
    return 0;
}

int cmd_baselinetrain(const CommonArgs& args, const std::string& data_dir) {
    RunConfig cfg = build_config(args);
    fs::create_directories(args.out_dir);
    auto pool = std::make_shared<std::vector<Sequence>>();
    for (auto& [name, seq] : load_sequences(data_dir)) pool->push_back(std::move(seq));
    ParamSet init = init_detector_params(cfg.detector, cfg.meta.alpha_init, cfg.seed);
    TrainResult res = baseline_train(cfg.detector, cfg.meta, dataset_task_source(pool, cfg), init);
    save_checkpoint((fs::path(args.out_dir) / "checkpoint_final.ckpt").string(), cfg.detector,
                    res.params);
    write_text(fs::path(args.out_dir) / "train_log.txt", train_log_text(res.log));
    return 0;
}

int cmd_track(const CommonArgs& args, const std::string& checkpoint, const std::string& data_dir,
              bool no_online_update) {
    RunConfig cfg = build_config(args);
    if (no_online_update) cfg.tracker.online_steps = 0;
    auto [det, params] = load_checkpoint(checkpoint);
    fs::create_directories(args.out_dir);
    for (const auto& [name, seq] : load_sequences(data_dir)) {
        auto results = run_tracker(seq, params, det, cfg.tracker);
        save_results((fs::path(args.out_dir) / ("results_" + name + ".txt")).string(), results);
    }
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& results_path,
             const std::string& data_dir) {
    auto seqs = load_sequences(data_dir);
    fs::create_directories(args.out_dir);
    std::vector<BoundingBox> all_pred, all_gt;
    for (const auto& [name, seq] : seqs) {
        fs::path rp = fs::is_directory(results_path)
                          ? fs::path(results_path) / ("results_" + name + ".txt")
                          : fs::path(results_path);
        std::vector<Detection> results = load_results(rp.string());
        std::vector<BoundingBox> pred;
        for (const auto& d : results) pred.push_back(d.box);
        EvalReport rep = evaluate(pred, seq.gt);
        write_text(fs::path(args.out_dir) / ("report_" + name + ".txt"), report_table(rep));
        write_text(fs::path(args.out_dir) / ("metrics_" + name + ".txt"), report_metrics(rep));
        write_text(fs::path(args.out_dir) / ("success_" + name + ".txt"),
                   success_curve_text(rep));
        all_pred.insert(all_pred.end(), pred.begin(), pred.end());
        all_gt.insert(all_gt.end(), seq.gt.begin(), seq.gt.end());
    }
    EvalReport overall = evaluate(all_pred, all_gt);
    write_text(fs::path(args.out_dir) / "report.txt", report_table(overall));
    write_text(fs::path(args.out_dir) / "metrics.txt", report_metrics(overall));
    write_text(fs::path(args.out_dir) / "success.txt", success_curve_text(overall));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"meta-learned instance detector: data generation, training, tracking, eval"};
    app.require_subcommand(1);

    CommonArgs gen_args, meta_args, base_args, track_args, eval_args;
    std::string data_dir, checkpoint, results_path;
    int64_t resume_epoch = -1;
    bool no_online_update = false;

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    add_common(gen, gen_args);

    CLI::App* metatrain = app.add_subcommand("metatrain", "meta-train the detector");
    add_common(metatrain, meta_args);
    metatrain->add_option("--data", data_dir, "dataset directory")->required();
    metatrain->add_option("--resume-epoch", resume_epoch,
                          "resume from this epoch's checkpoint in --out");
    metatrain->add_option("--inner-steps", [&meta_args](const std::vector<std::string>& v) {
        meta_args.sets.push_back("inner_steps=" + v[0]);
        return true;
    }, "inner GD step count");
    metatrain->add_option("--head-style", [&meta_args](const std::vector<std::string>& v) {
        meta_args.sets.push_back("head_style=" + v[0]);
        return true;
    }, "anchor or anchor_free");

    CLI::App* baselinetrain =
        app.add_subcommand("baselinetrain", "train the standard-GD baseline detector");
    add_common(baselinetrain, base_args);
    baselinetrain->add_option("--data", data_dir, "dataset directory")->required();
    baselinetrain->add_option("--head-style", [&base_args](const std::vector<std::string>& v) {
        base_args.sets.push_back("head_style=" + v[0]);
        return true;
    }, "anchor or anchor_free");

    CLI::App* track = app.add_subcommand("track", "run the online tracker");
    add_common(track, track_args);
    track->add_option("--checkpoint", checkpoint, "detector checkpoint")->required();
    track->add_option("--data", data_dir, "sequence or dataset directory")->required();
    track->add_flag("--no-online-update", no_online_update, "disable online updating");
    track->add_option("--update-interval", [&track_args](const std::vector<std::string>& v) {
        track_args.sets.push_back("update_interval=" + v[0]);
        return true;
    }, "frames between online updates");

    CLI::App* eval = app.add_subcommand("eval", "evaluate tracking results");
    add_common(eval, eval_args);
    eval->add_option("--results", results_path, "results file or directory")->required();
    eval->add_option("--data", data_dir, "sequence or dataset directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(gen_args);
        if (metatrain->parsed()) return cmd_metatrain(meta_args, data_dir, resume_epoch);
        if (baselinetrain->parsed()) return cmd_baselinetrain(base_args, data_dir);
        if (track->parsed()) return cmd_track(track_args, checkpoint, data_dir, no_online_update);
        if (eval->parsed()) return cmd_eval(eval_args, results_path, data_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
