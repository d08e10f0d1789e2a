#include <iostream>

#include "CLI11.hpp"
#include "ctxot/cli.hpp"
#include "ctxot/errors.hpp"

using namespace ctxot;

int main(int argc, char** argv) {
    CLI::App app{"Unpaired image enhancement with a context-aware optimal-transport loss"};
    app.require_subcommand(1);

    SynthOptions synth;
    CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic fundus dataset");
    synth_cmd->add_option("--count", synth.count, "Number of images")->required();
    synth_cmd->add_option("--size", synth.size, "Image side (power of two >= 32)")
        ->default_val(64);
    synth_cmd->add_option("--seed", synth.seed, "Base seed")->default_val(0);
    synth_cmd->add_option("--out", synth.out_dir, "Output directory")->required();

    DegradeOptions deg;
    CLI::App* deg_cmd = app.add_subcommand("degrade", "Degrade clean images");
    deg_cmd->add_option("--in", deg.in_dir, "Input directory of .ppm images")->required();
    deg_cmd->add_option("--out", deg.out_dir, "Output directory")->required();
    deg_cmd->add_option("--config", deg.config_path, "Degradation config file");
    deg_cmd->add_option("--seed", deg.seed, "Seed")->default_val(0);
    deg_cmd->add_flag("--suite", deg.suite, "Emit the six canonical combinations per image");

    TrainOptions tr;
    CLI::App* tr_cmd = app.add_subcommand("train", "Train the enhancement model");
    tr_cmd->add_option("--clean", tr.clean_dir, "High-quality pool directory")->required();
    tr_cmd->add_option("--noisy", tr.noisy_dir, "Low-quality pool directory")->required();
    tr_cmd->add_option("--config", tr.config_path, "Training config file");
    tr_cmd->add_option("--out", tr.out_checkpoint, "Checkpoint output path")->required();
    CLI::Option* tr_seed = tr_cmd->add_option("--seed", tr.seed, "Seed (overrides the config)");

    EnhanceOptions enh;
    CLI::App* enh_cmd = app.add_subcommand("enhance", "Run the trained model over images");
    enh_cmd->add_option("--ckpt", enh.checkpoint, "Checkpoint path")->required();
    enh_cmd->add_option("--in", enh.in_dir, "Input directory")->required();
    enh_cmd->add_option("--out", enh.out_dir, "Output directory")->required();

    EvalOptions ev;
    CLI::App* ev_cmd = app.add_subcommand("eval", "PSNR/SSIM between matching images");
    ev_cmd->add_option("--ref", ev.ref_dir, "Reference directory")->required();
    ev_cmd->add_option("--test", ev.test_dir, "Test directory")->required();
    ev_cmd->add_option("--out", ev.out_csv, "Report CSV path")->required();

    AblateOptions ab;
    CLI::App* ab_cmd = app.add_subcommand("ablate", "Sweep the transport-cost weight");
    ab_cmd->add_option("--lambdas", ab.lambdas, "start:stop:stride sweep")->required();
    ab_cmd->add_option("--clean", ab.clean_dir, "Training clean pool")->required();
    ab_cmd->add_option("--noisy", ab.noisy_dir, "Training noisy pool")->required();
    ab_cmd->add_option("--eval-clean", ab.eval_clean_dir, "Paired eval references")->required();
    ab_cmd->add_option("--eval-noisy", ab.eval_noisy_dir, "Paired eval inputs")->required();
    ab_cmd->add_option("--config", ab.config_path, "Training config file");
    ab_cmd->add_option("--steps", ab.steps, "Per-lambda step cap")->default_val(0);
    ab_cmd->add_option("--out", ab.out_dir, "Output directory")->required();
    CLI::Option* ab_seed = ab_cmd->add_option("--seed", ab.seed, "Seed (overrides the config)");

    OtcostOptions ot;
    CLI::App* ot_cmd = app.add_subcommand("otcost", "Transport cost between feature files");
    ot_cmd->set_help_flag("--help", "Print this help message and exit");  // frees --h
    ot_cmd->add_option("--a", ot.a_path, "First feature file")->required();
    ot_cmd->add_option("--b", ot.b_path, "Second feature file")->required();
    ot_cmd->add_option("--cost", ot.cost, "sqeuclid | exp")->default_val("exp");
    ot_cmd->add_option("--h", ot.h, "Bandwidth for the exponential cost")->default_val(0.5);
    ot_cmd->add_option("--mode", ot.mode, "emd | rem | context")->default_val("context");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*synth_cmd) {
            run_synth(synth);
        } else if (*deg_cmd) {
            run_degrade(deg);
        } else if (*tr_cmd) {
            tr.seed_given = tr_seed->count() > 0;
            run_train(tr);
        } else if (*enh_cmd) {
            run_enhance(enh);
        } else if (*ev_cmd) {
            run_eval(ev);
        } else if (*ab_cmd) {
            ab.seed_given = ab_seed->count() > 0;
            run_ablate(ab);
        } else if (*ot_cmd) {
            run_otcost(ot, std::cout);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
