#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "memvae/checkpoint.hpp"
#include "memvae/eval.hpp"
#include "memvae/pgm.hpp"
#include "memvae/train.hpp"

namespace fs = std::filesystem;
using namespace memvae;

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
    auto* c = cmd->add_option("--config", opts.config_path, "run configuration file");
    if (config_required) c->required();
    cmd->add_option("--seed", opts.seed, "override the config seed");
    cmd->add_option("--out", opts.out_dir, "run directory for outputs");
}

TrainConfig load_config(const CommonOpts& opts) {
    TrainConfig cfg =
        opts.config_path.empty() ? TrainConfig{} : TrainConfig::load(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    return cfg;
}

fs::path prepare_run_dir(const CommonOpts& opts, const TrainConfig& cfg,
                         const std::string& command) {
    fs::path dir = opts.out_dir.empty() ? fs::path("runs") / command : fs::path(opts.out_dir);
    fs::create_directories(dir);
    std::ofstream echo(dir / "config.txt");
    echo << cfg.echo();
    return dir;
}

// Installs an evaluation memory into the model per the config mode and
// returns the matching targets. recall: targets are the memory rows
// themselves; few_shot: disjoint same-class targets; learned_memory: the
// trained memory stays, targets come from the held-out set.
struct EvalSetup {
    std::vector<std::vector<double>> targets;
    std::vector<int> labels;
    bool labeled = false;
};

template <typename ModelT>
EvalSetup install_eval_memory(ModelT& model, const TrainConfig& cfg,
                              const Dataset& eval_ds, std::size_t mem_size,
                              std::size_t n_targets, Rng& rng) {
    EvalSetup setup;
    switch (cfg.mode) {
        case TrainMode::recall: {
            if (eval_ds.size() < mem_size)
                throw ConfigError("eval dataset smaller than the requested memory");
            std::vector<std::vector<double>> rows;
            for (std::size_t i = 0; i < mem_size; ++i) {
                // draw distinct rows
                std::size_t j;
                bool fresh;
                do {
                    j = rng.uniform_int(eval_ds.size());
                    fresh = true;
                    for (const auto& r : rows)
                        if (r == eval_ds.images[j]) fresh = false;
                } while (!fresh);
                rows.push_back(eval_ds.images[j]);
            }
            setup.targets = rows;
            model.set_memory(MemoryBuffer::fixed(std::move(rows)));
            return setup;
        }
        case TrainMode::few_shot: {
            SweepSet sweep = test_memory_sweep(eval_ds, cfg.episode_classes,
                                               cfg.mem_per_class, cfg.targets_per_class,
                                               rng);
            model.set_memory(std::move(sweep.memory));
            for (std::size_t i : sweep.target_indices) {
                setup.targets.push_back(eval_ds.images[i]);
                setup.labels.push_back(eval_ds.class_ids[i]);
            }
            setup.labeled = true;
            return setup;
        }
        case TrainMode::learned_memory: {
            for (std::size_t i = 0; i < std::min(n_targets, eval_ds.size()); ++i)
                setup.targets.push_back(eval_ds.images[rng.uniform_int(eval_ds.size())]);
            return setup;
        }
    }
    throw ConfigError("unhandled mode");
}

void print_report(const EvalReport& rep, std::ostream& os) {
    os << "nll_bound " << rep.nll_mean << " +- " << rep.nll_stderr << " nats (K=" << rep.k
       << ")\n"
       << "kl_a " << rep.kl_a << " nats, kl_z " << rep.kl_z << " nats\n";
    for (const auto& [label, nll] : rep.per_class_nll)
        os << "  class " << label << ": nll " << nll << "\n";
}

int cmd_train(const CommonOpts& opts) {
    TrainConfig cfg = load_config(opts);
    fs::path dir = prepare_run_dir(opts, cfg, "train");
    Trainer trainer(cfg, cfg.load_train_dataset());
    std::ofstream metrics(dir / "metrics.csv");
    trainer.run(&metrics);
    trainer.save_checkpoint(dir / "checkpoint.bin");
    if (cfg.model != ModelKind::baseline_vae) {
        const MemoryBuffer& mem = cfg.model == ModelKind::memvae
                                      ? trainer.memvae().memory()
                                      : trainer.soft().memory();
        if (mem.slots() > 0)
            write_memory_pgm(mem, dir / "memory.pgm", cfg.img_side, cfg.img_side);
    }
    std::cout << "run written to " << dir.string() << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& opts, std::string checkpoint, std::size_t k_override,
             std::size_t mem_size, std::size_t n_targets) {
    TrainConfig cfg = load_config(opts);
    fs::path dir = prepare_run_dir(opts, cfg, "eval");
    const std::size_t k = k_override ? k_override : cfg.eval_k;
    const std::size_t slots = mem_size ? mem_size : cfg.mem_size;

    Trainer holder(cfg, cfg.load_train_dataset());
    if (!checkpoint.empty()) holder.load_checkpoint(checkpoint);
    Dataset eval_ds = cfg.load_eval_dataset();
    Rng rng(cfg.seed, 40);

    EvalReport rep;
    switch (cfg.model) {
        case ModelKind::memvae: {
            EvalSetup setup =
                install_eval_memory(holder.memvae(), cfg, eval_ds, slots, n_targets, rng);
            rep = eval_nll(holder.memvae(), setup.targets,
                           setup.labeled ? &setup.labels : nullptr, k, rng);
            break;
        }
        case ModelKind::baseline_vae: {
            std::vector<std::vector<double>> targets;
            for (std::size_t i = 0; i < std::min<std::size_t>(n_targets, eval_ds.size()); ++i)
                targets.push_back(eval_ds.images[rng.uniform_int(eval_ds.size())]);
            rep = eval_nll(holder.baseline(), targets, nullptr, k, rng);
            break;
        }
        case ModelKind::soft_attention: {
            EvalSetup setup =
                install_eval_memory(holder.soft(), cfg, eval_ds, slots, n_targets, rng);
            rep = eval_nll(holder.soft(), setup.targets,
                           setup.labeled ? &setup.labels : nullptr, k, rng);
            break;
        }
    }
    print_report(rep, std::cout);
    std::ofstream csv(dir / "eval.csv");
    csv << "k,nll,stderr,kl_a,kl_z\n"
        << k << "," << rep.nll_mean << "," << rep.nll_stderr << "," << rep.kl_a << ","
        << rep.kl_z << "\n";
    return 0;
}

int cmd_sweep(const CommonOpts& opts, std::string checkpoint, std::string c_list_str,
              std::size_t n_per_class, std::size_t k_override,
              std::size_t targets_per_class) {
    TrainConfig cfg = load_config(opts);
    fs::path dir = prepare_run_dir(opts, cfg, "sweep");
    const std::size_t k = k_override ? k_override : cfg.eval_k;

    std::vector<std::size_t> c_list;
    {
        std::stringstream ss(c_list_str);
        std::string item;
        while (std::getline(ss, item, ',')) c_list.push_back(std::stoul(item));
    }
    if (c_list.empty()) throw ConfigError("sweep: empty --c-list");

    Trainer holder(cfg, cfg.load_train_dataset());
    if (!checkpoint.empty()) holder.load_checkpoint(checkpoint);
    Dataset eval_ds = cfg.load_eval_dataset();
    Rng rng(cfg.seed, 41);

    std::vector<SweepRow> rows;
    if (cfg.model == ModelKind::memvae)
        rows = memory_sweep(holder.memvae(), eval_ds, c_list, n_per_class, k,
                            targets_per_class, rng);
    else if (cfg.model == ModelKind::soft_attention)
        rows = memory_sweep(holder.soft(), eval_ds, c_list, n_per_class, k,
                            targets_per_class, rng);
    else
        throw ConfigError("sweep: baseline_vae has no memory to sweep");

    std::ofstream csv(dir / "sweep.csv");
    csv << sweep_csv_header() << "\n";
    std::cout << sweep_csv_header() << "\n";
    for (const auto& row : rows) {
        csv << to_csv(row) << "\n";
        std::cout << to_csv(row) << "\n";
    }
    return 0;
}

int cmd_sample(const CommonOpts& opts, std::string checkpoint, std::size_t rows,
               std::size_t cols, bool common_row_address) {
    TrainConfig cfg = load_config(opts);
    if (cfg.model != ModelKind::memvae)
        throw ConfigError("sample: only the memvae model generates from memory");
    fs::path dir = prepare_run_dir(opts, cfg, "sample");

    Trainer holder(cfg, cfg.load_train_dataset());
    if (!checkpoint.empty()) holder.load_checkpoint(checkpoint);
    MemVae& model = holder.memvae();
    Rng rng(cfg.seed, 42);
    if (!model.memory().trainable()) {
        Dataset eval_ds = cfg.load_eval_dataset();
        install_eval_memory(model, cfg, eval_ds, cfg.mem_size, 0, rng);
    }

    std::vector<std::vector<double>> images;
    for (std::size_t r = 0; r < rows; ++r) {
        std::optional<std::size_t> fixed;
        if (common_row_address)
            fixed = model.address_prior(model.embed_memory()).sample(rng);
        for (auto& g : model.generate(rng, cols, fixed))
            images.push_back(std::move(g.pixels));
    }
    write_pgm_grid(dir / "samples.pgm", images, cfg.img_side, cfg.img_side, cols);
    std::cout << "wrote " << images.size() << " samples to "
              << (dir / "samples.pgm").string() << "\n";
    return 0;
}

int cmd_inspect(const CommonOpts& opts, std::string checkpoint, std::size_t index,
                std::size_t top_n) {
    TrainConfig cfg = load_config(opts);
    if (cfg.model != ModelKind::memvae)
        throw ConfigError("inspect: the addressing posterior exists only for memvae");
    fs::path dir = prepare_run_dir(opts, cfg, "inspect");

    Trainer holder(cfg, cfg.load_train_dataset());
    if (!checkpoint.empty()) holder.load_checkpoint(checkpoint);
    MemVae& model = holder.memvae();
    Dataset eval_ds = cfg.load_eval_dataset();
    Rng rng(cfg.seed, 43);
    EvalSetup setup =
        install_eval_memory(model, cfg, eval_ds, cfg.mem_size, index + 1, rng);
    if (setup.targets.empty()) throw ConfigError("inspect: no targets available");
    const Tensor x = Tensor::from(setup.targets[index % setup.targets.size()]);

    PosteriorInspection insp = inspect_posterior(model, x, top_n);
    write_posterior_csv(dir / "histogram.csv", insp);
    write_posterior_strip(dir / "top_entries.pgm", model, x, insp, cfg.img_side,
                          cfg.img_side);
    std::cout << "top slots:";
    for (std::size_t slot : insp.top_slots)
        std::cout << " " << slot << " (p=" << insp.probs[slot] << ")";
    std::cout << "\n";
    return 0;
}

int cmd_classify(const CommonOpts& opts, std::string checkpoint, std::size_t way,
                 std::size_t shot, std::size_t episodes, std::string rule_str,
                 std::size_t k_override) {
    TrainConfig cfg = load_config(opts);
    if (cfg.model != ModelKind::memvae)
        throw ConfigError("classify: few-shot classification needs the memvae model");
    fs::path dir = prepare_run_dir(opts, cfg, "classify");
    const ClassifyRule rule = classify_rule_from_string(rule_str);
    const std::size_t k = k_override ? k_override : cfg.k;

    Trainer holder(cfg, cfg.load_train_dataset());
    if (!checkpoint.empty()) holder.load_checkpoint(checkpoint);
    MemVae& model = holder.memvae();
    Dataset eval_ds = cfg.load_eval_dataset();
    Rng rng(cfg.seed, 44);

    double total = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
        SweepSet set = test_memory_sweep(eval_ds, way, shot, cfg.targets_per_class, rng);
        model.set_memory(std::move(set.memory));
        std::vector<std::vector<double>> queries;
        std::vector<int> labels;
        for (std::size_t i : set.target_indices) {
            queries.push_back(eval_ds.images[i]);
            labels.push_back(eval_ds.class_ids[i]);
        }
        total += fewshot_classify(model, queries, labels, rule, k, rng).accuracy;
    }
    const double accuracy = episodes ? total / static_cast<double>(episodes) : 0.0;

    std::ofstream csv(dir / "classify.csv");
    csv << "way,shot,rule,episodes,accuracy\n"
        << way << "," << shot << "," << to_string(rule) << "," << episodes << ","
        << accuracy << "\n";
    std::cout << way << "-way " << shot << "-shot " << to_string(rule) << " accuracy "
              << accuracy << " over " << episodes << " episodes\n";
    return 0;
}

int cmd_gradcheck(const CommonOpts& opts, double tolerance) {
    TrainConfig cfg = load_config(opts);
    GradcheckReport report = gradcheck(tolerance, cfg.seed);
    std::cout << format_report(report);
    if (!opts.out_dir.empty()) {
        fs::path dir = prepare_run_dir(opts, cfg, "gradcheck");
        std::ofstream f(dir / "gradcheck.txt");
        f << format_report(report);
    }
    return report.pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"variational memory-addressing VAE"};
    app.require_subcommand(1);

    CommonOpts train_opts, eval_opts, sweep_opts, sample_opts, inspect_opts,
        classify_opts, gradcheck_opts;
    std::string checkpoint;
    std::size_t k_override = 0, mem_size = 0, n_targets = 64;
    std::string c_list = "1,2,4,8,16";
    std::size_t n_per_class = 4, targets_per_class = 4;
    std::size_t rows = 8, cols = 8;
    bool common_row_address = false;
    std::size_t index = 0, top_n = 5;
    std::size_t way = 5, shot = 1, episodes = 20;
    std::string rule = "feedforward";
    double tolerance = 1e-4;

    auto* train = app.add_subcommand("train", "train a model per the config");
    add_common(train, train_opts);

    auto* eval = app.add_subcommand("eval", "high-K NLL bound and KL decomposition");
    add_common(eval, eval_opts);
    eval->add_option("--checkpoint", checkpoint, "trained checkpoint to load");
    eval->add_option("--k", k_override, "posterior samples per example");
    eval->add_option("--mem-size", mem_size, "evaluation memory size (recall mode)");
    eval->add_option("--targets", n_targets, "number of evaluation targets");

    auto* sweep = app.add_subcommand("sweep", "test-time memory-size sweep");
    add_common(sweep, sweep_opts);
    sweep->add_option("--checkpoint", checkpoint, "trained checkpoint to load");
    sweep->add_option("--c-list", c_list, "comma-separated class counts");
    sweep->add_option("--n", n_per_class, "memory entries per class");
    sweep->add_option("--k", k_override, "posterior samples per example");
    sweep->add_option("--targets-per-class", targets_per_class,
                      "evaluation targets per class");

    auto* sample = app.add_subcommand("sample", "ancestral sampling to a PGM grid");
    add_common(sample, sample_opts);
    sample->add_option("--checkpoint", checkpoint, "trained checkpoint to load");
    sample->add_option("--rows", rows, "grid rows");
    sample->add_option("--cols", cols, "grid columns");
    sample->add_flag("--common-row-address", common_row_address,
                     "draw one address per row and reuse it across the row");

    auto* inspect = app.add_subcommand("inspect", "dump q(a|x) and the top entries");
    add_common(inspect, inspect_opts);
    inspect->add_option("--checkpoint", checkpoint, "trained checkpoint to load");
    inspect->add_option("--index", index, "evaluation target index");
    inspect->add_option("--top", top_n, "number of top entries to dump");

    auto* classify = app.add_subcommand("classify", "few-shot classification accuracy");
    add_common(classify, classify_opts);
    classify->add_option("--checkpoint", checkpoint, "trained checkpoint to load");
    classify->add_option("--way", way, "number of classes");
    classify->add_option("--shot", shot, "memory examples per class");
    classify->add_option("--episodes", episodes, "number of evaluation episodes");
    classify->add_option("--rule", rule, "feedforward or weighted");
    classify->add_option("--k", k_override, "samples for the weighted rule");

    auto* gradcheckc = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    add_common(gradcheckc, gradcheck_opts, /*config_required=*/false);
    gradcheckc->add_option("--tolerance", tolerance, "max relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints help or the usage error
        return code == 0 ? 0 : 1;
    }

    try {
        if (train->parsed()) return cmd_train(train_opts);
        if (eval->parsed())
            return cmd_eval(eval_opts, checkpoint, k_override, mem_size, n_targets);
        if (sweep->parsed())
            return cmd_sweep(sweep_opts, checkpoint, c_list, n_per_class, k_override,
                             targets_per_class);
        if (sample->parsed())
            return cmd_sample(sample_opts, checkpoint, rows, cols, common_row_address);
        if (inspect->parsed())
            return cmd_inspect(inspect_opts, checkpoint, index, top_n);
        if (classify->parsed())
            return cmd_classify(classify_opts, checkpoint, way, shot, episodes, rule,
                                k_override);
        if (gradcheckc->parsed()) return cmd_gradcheck(gradcheck_opts, tolerance);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
