#include <cacp/config.hpp>
#include <cacp/pipeline.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <string>

namespace {

// Flags shared by augment/preview/build-gallery; each maps onto the config
// key of the same name, overriding values from --config.
struct CommonFlags {
    std::string config_file;
    std::string task;
    std::string source_dir;
    std::string gallery_dir;
    std::string out_dir;
    std::string fraction;
    int variants = 1;
    std::string prompt_mode;
    int points = 3;
    std::string backends;
    std::string seed;
    bool resume = false;

    CLI::Option* task_opt = nullptr;
    CLI::Option* source_opt = nullptr;
    CLI::Option* gallery_opt = nullptr;
    CLI::Option* out_opt = nullptr;
    CLI::Option* fraction_opt = nullptr;
    CLI::Option* variants_opt = nullptr;
    CLI::Option* mode_opt = nullptr;
    CLI::Option* points_opt = nullptr;
    CLI::Option* backends_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* resume_opt = nullptr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "flat key=value config file");
        task_opt = cmd->add_option("--task", task,
                                   "classification|detection|segmentation");
        source_opt = cmd->add_option("--source-dir", source_dir, "base dataset root");
        gallery_opt = cmd->add_option("--gallery-dir", gallery_dir,
                                      "donor gallery root (folder per class)");
        out_opt = cmd->add_option("--out-dir", out_dir, "output dataset root");
        fraction_opt = cmd->add_option("--fraction", fraction,
                                       "1/N of items to augment (default 1/1)");
        variants_opt = cmd->add_option("--variants", variants,
                                       "augmented variants per base image");
        mode_opt = cmd->add_option("--prompt-mode", prompt_mode, "box|box+rand|box+cam");
        points_opt = cmd->add_option("--points", points, "prompt point count [0,16]");
        backends_opt = cmd->add_option("--backends", backends,
                                       "fake|real for every backend role");
        seed_opt = cmd->add_option("--seed", seed, "run seed");
        resume_opt = cmd->add_flag("--resume", resume,
                                   "skip items whose outputs already exist");
    }

    cacp::RunConfig build() const {
        cacp::RunConfig config;
        if (!config_file.empty())
            cacp::apply_config(config, cacp::load_config_file(config_file));
        std::map<std::string, std::string> kv;
        if (task_opt->count()) kv["task"] = task;
        if (source_opt->count()) kv["source_dir"] = source_dir;
        if (gallery_opt->count()) kv["gallery_dir"] = gallery_dir;
        if (out_opt->count()) kv["output_dir"] = out_dir;
        if (fraction_opt->count()) kv["fraction"] = fraction;
        if (variants_opt->count()) kv["variants_per_image"] = std::to_string(variants);
        if (mode_opt->count()) kv["prompt.mode"] = prompt_mode;
        if (points_opt->count()) kv["prompt.n_points"] = std::to_string(points);
        if (backends_opt->count()) kv["backends.all"] = backends;
        if (seed_opt->count()) kv["seed"] = seed;
        if (resume_opt->count()) kv["resume"] = "true";
        cacp::apply_config(config, kv);
        return config;
    }
};

int error_exit_code(const cacp::Error& e) {
    switch (e.kind()) {
        case cacp::ErrorKind::Config: return 2;
        case cacp::ErrorKind::Logic: return 2;
        case cacp::ErrorKind::Io: return 3;
        case cacp::ErrorKind::Backend: return 4;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cacp: context-aware copy-paste data augmentation"};
    app.require_subcommand(1);

    auto* build_cmd = app.add_subcommand(
        "build-gallery", "index a donor gallery and build its ratio table");
    CommonFlags build_flags;
    build_flags.attach(build_cmd);

    auto* augment_cmd =
        app.add_subcommand("augment", "run the augmentation pipeline");
    CommonFlags augment_flags;
    augment_flags.attach(augment_cmd);

    auto* evaluate_cmd =
        app.add_subcommand("evaluate", "score predictions against ground truth");
    std::string eval_task, pred_dir, truth_dir, report_path;
    evaluate_cmd->add_option("--task", eval_task, "classification|detection|segmentation")
        ->required();
    evaluate_cmd->add_option("--pred-dir", pred_dir, "prediction dataset root")
        ->required();
    evaluate_cmd->add_option("--truth-dir", truth_dir, "ground-truth dataset root")
        ->required();
    evaluate_cmd->add_option("--out", report_path, "report file (default stdout)");

    auto* preview_cmd = app.add_subcommand(
        "preview", "dry-run one image: caption, ranking, prompt overlay, composite");
    CommonFlags preview_flags;
    preview_flags.attach(preview_cmd);
    std::string preview_image;
    preview_cmd->add_option("--image", preview_image, "base image to preview")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (build_cmd->parsed()) {
            auto config = build_flags.build();
            auto [index_path, ratio_path] = cacp::run_build_gallery(config);
            std::cout << "index\t" << index_path.string() << '\n'
                      << "ratio_table\t" << ratio_path.string() << '\n';
        } else if (augment_cmd->parsed()) {
            auto config = augment_flags.build();
            auto report = cacp::run_augment(config);
            std::cout << report.summary();
        } else if (evaluate_cmd->parsed()) {
            auto tsv = cacp::run_evaluate(pred_dir, truth_dir,
                                          cacp::task_from_string(eval_task));
            if (report_path.empty()) {
                std::cout << tsv;
            } else {
                std::ofstream out(report_path, std::ios::trunc);
                if (!out) throw cacp::IoError("cannot write report: " + report_path);
                out << tsv;
            }
        } else if (preview_cmd->parsed()) {
            auto config = preview_flags.build();
            cacp::run_preview(config, preview_image);
            std::cout << "preview\t" << (config.output_dir / "preview").string() << '\n';
        }
    } catch (const cacp::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return error_exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
