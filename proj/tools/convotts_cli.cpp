// Command-line front end: corpus generation, single-cell training, the
// ablation grid, and gradient verification.
#include <cstdio>
#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "convotts/cli.hpp"

using namespace convotts;

int main(int argc, char** argv) {
    CLI::App app{"dialogue-context speech synthesis workbench"};
    app.require_subcommand(1);

    GenRunConfig gen;
    CLI::App* cmd_gen = app.add_subcommand("gen-corpus", "generate a synthetic dialogue corpus");
    cmd_gen->add_option("--out-dir", gen.out_dir, "output directory")->required();
    cmd_gen->add_option("--seed", gen.gen.seed, "generator seed");
    cmd_gen->add_option("--dialogues", gen.gen.n_dialogues, "total dialogues before the split");
    cmd_gen->add_option("--turns", gen.gen.turns_per_dialogue, "turns per dialogue (even)");
    cmd_gen->add_option("--styles", gen.gen.styles, "number of latent styles (>= 2)");
    cmd_gen->add_option("--mel-dim", gen.gen.mel_dim, "mel feature width");
    cmd_gen->add_option("--vocab", gen.gen.vocab, "token vocabulary size");
    cmd_gen->add_option("--noise-std", gen.gen.noise_std, "mel noise around style prototypes");
    cmd_gen->add_option("--topics", gen.gen.n_topics, "token band count");

    TrainRunConfig tr;
    CLI::App* cmd_train = app.add_subcommand("train", "train one conditioning strategy");
    cmd_train->add_option("--corpus-dir", tr.corpus_dir, "corpus directory")->required();
    cmd_train->add_option("--out-dir", tr.out_dir, "output directory")->required();
    cmd_train->add_option("--seed", tr.seed, "init/shuffle seed");
    cmd_train->add_option("--epochs", tr.epochs, "training epochs");
    cmd_train->add_option("--lr", tr.lr, "Adam learning rate");
    cmd_train->add_option("--beta1", tr.beta1, "Adam beta1");
    cmd_train->add_option("--beta2", tr.beta2, "Adam beta2");
    cmd_train->add_option("--lambda-sg", tr.lambda_sg, "style-guided loss weight");
    cmd_train->add_option("--capacity", tr.capacity, "history window size C");
    cmd_train->add_flag("--ssl", tr.ssl, "frozen pretrained prosody encoder");
    cmd_train->add_flag("--sg", tr.sg, "style-guided loss");
    cmd_train->add_flag("--attn", tr.attn, "attention aggregation");
    cmd_train->add_flag("--fg", tr.fg, "fine-grained per-sentence embeddings");
    cmd_train->add_flag("--cross-modal", tr.cross_modal, "feed history prosody to the encoder");

    AblateRunConfig ab;
    CLI::App* cmd_ablate = app.add_subcommand("ablate", "train and tabulate a strategy grid");
    cmd_ablate->add_option("--corpus-dir", ab.corpus_dir, "corpus directory")->required();
    cmd_ablate->add_option("--out-dir", ab.out_dir, "output directory")->required();
    cmd_ablate->add_option("--seed", ab.seed, "shared base seed");
    cmd_ablate->add_option("--epochs", ab.epochs, "training epochs per cell");
    cmd_ablate->add_option("--lr", ab.lr, "Adam learning rate");
    cmd_ablate->add_option("--beta1", ab.beta1, "Adam beta1");
    cmd_ablate->add_option("--beta2", ab.beta2, "Adam beta2");
    cmd_ablate->add_option("--lambda-sg", ab.lambda_sg, "style-guided loss weight");
    cmd_ablate->add_option("--capacity", ab.capacity, "history window size C");
    cmd_ablate->add_option("--cells", ab.cells, "cell names (default: the full grid without ssl)")
        ->delimiter(',');

    GradCheckRunConfig gc;
    CLI::App* cmd_check = app.add_subcommand("grad-check", "finite-difference gradient audit");
    cmd_check->add_option("--tol", gc.tol, "max relative error");
    cmd_check->add_option("--only", gc.only, "restrict to one block");
    cmd_check->add_option("--seeds", gc.seeds, "random restarts per block");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (cmd_gen->parsed()) {
            run_gen_corpus(gen);
            std::cout << "corpus written to " << gen.out_dir << "\n";
        } else if (cmd_train->parsed()) {
            Metrics m = run_train(tr);
            std::cout << "recon_l1 " << m.recon_l1 << "  sg_mse " << m.sg_mse
                      << "  probe_accuracy " << m.probe_accuracy << "\n";
        } else if (cmd_ablate->parsed()) {
            std::vector<AblationRow> rows = run_ablate(ab);
            std::cout << ablation_csv(rows);
        } else if (cmd_check->parsed()) {
            GradSuiteResult res = run_grad_check(gc);
            for (const auto& r : res.rows)
                std::printf("%-18s %-28s %12.3e  %s\n", r.block.c_str(), r.param.c_str(),
                            r.max_rel_err, r.pass ? "pass" : "FAIL");
            std::printf("%zu parameters checked, tol %g: %s\n", res.rows.size(), res.tolerance,
                        res.all_pass() ? "all pass" : "FAILURES");
            if (!res.all_pass()) return kExitCheckFailed;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli_exit_code(e);
    }
    return kExitOk;
}
