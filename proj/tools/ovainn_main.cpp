// Command-line front end. Five subcommands: train (one expert per class,
// one class at a time), eval (single-/multi-head), predict, baseline
// (nearest prototype), inspect (parameter counts and model headers).
//
// stdout carries machine-parseable CSV only; all logging goes to stderr.
// Exit codes: 0 success, 1 configuration error, 2 data error, 3 output I/O
// error.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <semaphore>
#include <set>
#include <span>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "cli_support.hpp"

namespace {

using namespace ovainn;
using ovacli::RunConfig;

// ---------------------------------------------------------------------------
// Dataset plumbing
// ---------------------------------------------------------------------------

// Either an IDX image/label pair or an OVAFEAT1 feature file.
struct DatasetSpec {
    std::string images;
    std::string labels;
    std::string features;
    const char* what;  // for error messages

    bool given() const { return !images.empty() || !labels.empty() || !features.empty(); }

    void check() const {
        const bool idx = !images.empty() || !labels.empty();
        if (idx && (images.empty() || labels.empty())) {
            throw ConfigError(std::string(what) +
                              ": an IDX dataset needs both an images and a labels path");
        }
        if (idx && !features.empty()) {
            throw ConfigError(std::string(what) +
                              ": give either an IDX pair or a feature file, not both");
        }
    }
};

// Loads, normalizes (per-kind default unless overridden) and pads to an even
// width. Coupling splits vectors in half, so an even dim is structural.
LabeledVectors load_labeled(const DatasetSpec& spec, const std::string& normalize_spec) {
    spec.check();
    if (!spec.given()) {
        throw ConfigError(std::string(spec.what) +
                          ": a dataset is required (--mnist-images/--mnist-labels or --features)");
    }
    const bool idx = spec.features.empty();
    LabeledVectors ds =
        idx ? load_mnist_idx(spec.images, spec.labels) : load_feature_file(spec.features);
    const NormalizeScheme scheme =
        normalize_spec.empty()
            ? (idx ? NormalizeScheme::scale255() : NormalizeScheme::none())
            : NormalizeScheme::parse(normalize_spec);
    ds = normalize(ds, scheme);
    ds = pad_to_even(ds);
    if (ds.size() == 0) {
        throw EmptyDatasetError(std::string(spec.what) + ": dataset is empty");
    }
    return ds;
}

DatasetSpec primary_spec(const RunConfig& rc, const char* what) {
    return {rc.mnist_images, rc.mnist_labels, rc.features, what};
}

DatasetSpec test_spec(const RunConfig& rc, const char* what) {
    return {rc.test_images, rc.test_labels, rc.test_features, what};
}

std::vector<std::int32_t> resolve_class_order(const std::string& spec, const LabeledVectors& ds) {
    if (spec.empty() || spec == "all") return classes_present(ds);
    return ovacli::parse_id_list(spec);
}

LabeledVectors filter_labels(const LabeledVectors& ds, const std::set<std::int32_t>& keep) {
    LabeledVectors out;
    out.dim = ds.dim;
    out.original_dim = ds.original_dim;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (keep.count(ds.labels[i])) {
            out.vectors.push_back(ds.vectors[i]);
            out.labels.push_back(ds.labels[i]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct ClassResult {
    InvertibleNet net;
    double final_loss;
};

ClassResult train_one_class(const LabeledVectors& batch, std::int32_t class_id,
                            const RunConfig& rc) {
    // Per-class seed: every class gets its own deterministic stream, so
    // training order and --parallel-classes cannot change any artifact.
    Rng rng(rc.train.seed ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(class_id)));
    double final_loss = 0.0;
    InvertibleNet net = train_class(
        std::span<const Vector>(batch.vectors), rc.train, rng,
        [&](int epoch, double loss, double lr) {
            final_loss = loss;
            std::cerr << "class " << class_id << " epoch " << epoch << "/" << rc.train.epochs
                      << " loss " << loss << " lr " << lr << "\n";
        });
    return {std::move(net), final_loss};
}

int cmd_train(RunConfig& rc) {
    if (rc.model.empty()) throw ConfigError("train: --model is required");
    if (rc.parallel_classes < 1) throw ConfigError("train: --parallel-classes must be >= 1");
    rc.train.activation = activation_from_string(rc.activation);
    rc.train.validate();

    LabeledVectors train_ds = load_labeled(primary_spec(rc, "train"), rc.normalize);
    const std::vector<std::int32_t> order = resolve_class_order(rc.class_order, train_ds);
    ClassStream stream = make_class_stream(train_ds, order);
    train_ds = LabeledVectors{};  // the stream holds the only copy now
    if (rc.limit_per_class > 0) {
        for (auto& [class_id, batch] : stream.batches) {
            (void)class_id;
            if (batch.vectors.size() > rc.limit_per_class) {
                batch.vectors.resize(rc.limit_per_class);
                batch.labels.resize(rc.limit_per_class);
            }
        }
    }

    std::optional<LabeledVectors> test_ds;
    const DatasetSpec tspec = test_spec(rc, "train");
    tspec.check();
    if (tspec.given()) test_ds = load_labeled(tspec, rc.normalize);
    const bool eval_each = rc.eval_every_class < 0 ? test_ds.has_value() : rc.eval_every_class > 0;
    if (eval_each && !test_ds) {
        throw ConfigError(
            "train: --eval-every-class needs --test-images/--test-labels or --test-features");
    }
    if (!rc.report.empty() && !eval_each) {
        throw ConfigError("train: --report needs test data to evaluate against");
    }

    ExpertRegistry reg;
    if (std::filesystem::exists(rc.model)) {
        reg = load_registry(rc.model);
        std::cerr << "resuming from " << rc.model << " (" << reg.size()
                  << " classes already trained)\n";
    }
    if (!reg.empty() && !stream.batches.empty() &&
        reg.dim() != stream.batches.front().second.dim) {
        throw DimensionError("train: model dim " + std::to_string(reg.dim()) +
                             " does not match dataset dim " +
                             std::to_string(stream.batches.front().second.dim));
    }

    // With --parallel-classes N, up to N classes train concurrently; results
    // are still added, checkpointed and reported in presentation order.
    std::vector<std::optional<ClassResult>> results(stream.batches.size());
    std::vector<std::thread> workers(stream.batches.size());
    std::counting_semaphore<> slots(rc.parallel_classes);
    if (rc.parallel_classes > 1) {
        for (std::size_t i = 0; i < stream.batches.size(); ++i) {
            const auto& [class_id, batch] = stream.batches[i];
            if (reg.has_class(class_id)) continue;
            workers[i] = std::thread([&results, &slots, &batch, class_id, &rc, i] {
                slots.acquire();
                results[i] = train_one_class(batch, class_id, rc);
                slots.release();
            });
        }
    }

    std::cout << "class_id,final_train_loss\n";
    std::vector<std::pair<std::size_t, double>> curve;
    std::optional<EvalReport> last_report;
    for (std::size_t i = 0; i < stream.batches.size(); ++i) {
        const auto& [class_id, batch] = stream.batches[i];
        if (reg.has_class(class_id)) {
            std::cerr << "class " << class_id << " already trained, skipping\n";
        } else {
            if (workers[i].joinable()) {
                workers[i].join();
            } else {
                results[i] = train_one_class(batch, class_id, rc);
            }
            reg.add_class(class_id, std::move(results[i]->net));
            std::cout << class_id << "," << ovacli::fmt_double(results[i]->final_loss) << "\n";
            results[i].reset();
            ovacli::write_phase([&] { save_registry(reg, rc.model); });
        }
        if (eval_each) {
            const std::vector<std::int32_t> seen = reg.class_ids();
            const LabeledVectors subset =
                filter_labels(*test_ds, {seen.begin(), seen.end()});
            if (subset.size() == 0) {
                std::cerr << "no test samples for the " << reg.size()
                          << " classes seen so far, skipping evaluation\n";
                continue;
            }
            EvalReport r = evaluate(reg, subset, EvalMode::single_head, nullptr, rc.threads);
            curve.emplace_back(reg.size(), r.accuracy());
            std::cerr << "after " << reg.size() << " classes: accuracy " << r.accuracy() << "\n";
            last_report = std::move(r);
        }
    }

    if (!rc.report.empty() && last_report) {
        last_report->accuracy_after_each_batch = curve;
        ovacli::write_report_files(rc.report, *last_report);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(RunConfig& rc) {
    if (rc.model.empty()) throw ConfigError("eval: --model is required");
    EvalMode mode;
    if (rc.mode == "single") {
        mode = EvalMode::single_head;
    } else if (rc.mode == "multi") {
        mode = EvalMode::multi_head;
    } else {
        throw ConfigError("eval: --mode must be single or multi, got " + rc.mode);
    }
    if (mode == EvalMode::multi_head && rc.tasks.empty()) {
        throw ConfigError("eval: --mode multi requires --tasks");
    }
    if (mode == EvalMode::single_head && !rc.tasks.empty()) {
        throw ConfigError("eval: --tasks only applies to --mode multi");
    }

    const ExpertRegistry reg = load_registry(rc.model);
    const LabeledVectors test = load_labeled(primary_spec(rc, "eval"), rc.normalize);
    EvalReport report;
    if (mode == EvalMode::multi_head) {
        const TaskPartition tasks = ovacli::parse_tasks(rc.tasks);
        report = evaluate(reg, test, mode, &tasks, rc.threads);
    } else {
        report = evaluate(reg, test, mode, nullptr, rc.threads);
    }
    std::cout << ovacli::curve_csv(report.accuracy_after_each_batch);
    if (!rc.report.empty()) ovacli::write_report_files(rc.report, report);
    return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

int cmd_predict(RunConfig& rc) {
    if (rc.model.empty()) throw ConfigError("predict: --model is required");
    const ExpertRegistry reg = load_registry(rc.model);
    if (reg.empty()) throw StateError("predict: model has no experts");
    const LabeledVectors ds = load_labeled(primary_spec(rc, "predict"), rc.normalize);

    std::vector<Prediction> preds(ds.size());
    detail::parallel_for(ds.size(), detail::resolve_threads(rc.threads),
                         [&](std::size_t i) { preds[i] = predict(reg, ds.vectors[i]); });

    std::cout << "row,class_id";
    for (std::int32_t id : reg.class_ids()) std::cout << ",score_" << id;
    std::cout << "\n";
    for (std::size_t i = 0; i < preds.size(); ++i) {
        std::cout << i << "," << preds[i].class_id;
        for (const auto& [id, score] : preds[i].per_class_scores) {
            (void)id;
            std::cout << "," << ovacli::fmt_double(score);
        }
        std::cout << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------------

int cmd_baseline(RunConfig& rc) {
    LabeledVectors train_ds = load_labeled(primary_spec(rc, "baseline"), rc.normalize);
    const std::vector<std::int32_t> order = resolve_class_order(rc.class_order, train_ds);
    ClassStream stream = make_class_stream(train_ds, order);
    train_ds = LabeledVectors{};
    std::map<std::int32_t, std::vector<Vector>> per_class;
    for (auto& [class_id, batch] : stream.batches) {
        if (rc.limit_per_class > 0 && batch.vectors.size() > rc.limit_per_class) {
            batch.vectors.resize(rc.limit_per_class);
        }
        per_class.emplace(class_id, std::move(batch.vectors));
    }
    const PrototypeModel model = fit_prototypes(per_class);

    const LabeledVectors test = load_labeled(test_spec(rc, "baseline"), rc.normalize);
    const EvalReport report = evaluate_prototype(model, test, rc.threads);
    std::cout << ovacli::curve_csv(report.accuracy_after_each_batch);
    if (!rc.report.empty()) {
        ovacli::write_report_files(rc.report, report, {{"baseline", "prototype"}});
    }
    return 0;
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

int cmd_inspect(RunConfig& rc) {
    if (!rc.model.empty()) {
        const ExpertRegistry reg = load_registry(rc.model);
        std::uint64_t total = 0;
        for (const ExpertRegistry::Entry& e : reg.entries()) total += param_count(e.net);
        std::cout << "nets," << reg.size() << "\n";
        std::cout << "dim," << reg.dim() << "\n";
        std::cout << "total_params," << total << "\n";
        std::cout << "class_id,n_blocks,rank,activation,params\n";
        for (const ExpertRegistry::Entry& e : reg.entries()) {
            const SubNet& first = e.net.blocks().front().f1;
            std::cout << e.class_id << "," << e.net.blocks().size() << "," << first.A.rows()
                      << "," << to_string(first.activation) << "," << param_count(e.net) << "\n";
        }
        return 0;
    }
    // No model file: report what the configured shape would cost.
    const std::uint64_t per_class =
        ovacli::params_for_shape(rc.dim, rc.train.rank, rc.train.n_blocks);
    std::cout << "dim," << rc.dim << "\n";
    std::cout << "rank," << rc.train.rank << "\n";
    std::cout << "blocks," << rc.train.n_blocks << "\n";
    std::cout << "classes," << rc.classes << "\n";
    std::cout << "per_class_params," << per_class << "\n";
    std::cout << "total_params," << per_class * rc.classes << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// Option wiring
// ---------------------------------------------------------------------------

void add_common_options(CLI::App* cmd, RunConfig& rc) {
    // Handled by apply_config_file before parsing; registered here so the
    // token is accepted and documented per subcommand.
    cmd->add_option("--config", rc.config_file,
                    "flat key=value config file; command-line flags win");
    cmd->add_option("--threads", rc.threads, "worker threads for evaluation/prediction "
                    "(0 = hardware concurrency)");
}

void add_dataset_options(CLI::App* cmd, RunConfig& rc) {
    cmd->add_option("--mnist-images", rc.mnist_images, "IDX image file (big-endian ubyte)");
    cmd->add_option("--mnist-labels", rc.mnist_labels, "IDX label file");
    cmd->add_option("--features", rc.features, "OVAFEAT1 feature file");
    cmd->add_option("--normalize", rc.normalize,
                    "none | scale_255 | affine:<shift>:<scale> "
                    "(default: scale_255 for IDX, none for features)");
}

void add_test_dataset_options(CLI::App* cmd, RunConfig& rc) {
    cmd->add_option("--test-images", rc.test_images, "held-out IDX image file");
    cmd->add_option("--test-labels", rc.test_labels, "held-out IDX label file");
    cmd->add_option("--test-features", rc.test_features, "held-out OVAFEAT1 feature file");
}

void add_train_options(CLI::App* cmd, RunConfig& rc) {
    cmd->add_option("--class-order", rc.class_order,
                    "comma-separated class ids or ranges (default: all, ascending)");
    cmd->add_option("--lr", rc.train.learning_rate, "Adam learning rate");
    cmd->add_option("--epochs", rc.train.epochs, "epochs per class");
    cmd->add_option("--weight-decay", rc.train.weight_decay, "L2 penalty coefficient");
    cmd->add_option("--patience", rc.train.patience,
                    "epochs without improvement before halving the learning rate");
    cmd->add_option("--batch-size", rc.train.batch_size, "minibatch size");
    cmd->add_option("--rank", rc.train.rank, "hidden width of each coupling sub-network");
    cmd->add_option("--blocks", rc.train.n_blocks, "coupling blocks per expert");
    cmd->add_option("--activation", rc.activation, "relu | leaky_relu | tanh | identity");
    cmd->add_option("--seed", rc.train.seed,
                    "base RNG seed (each class trains with seed XOR class_id)");
    cmd->add_option("--limit-per-class", rc.limit_per_class,
                    "use only the first N training samples of each class (0 = all)");
    cmd->add_option("--parallel-classes", rc.parallel_classes,
                    "train up to N classes concurrently (artifacts stay deterministic)");
    // Callback flags keep the -1 "decide from the inputs" state when neither
    // spelling is passed; a plain int target would be reset to 0.
    cmd->add_flag_callback(
        "--eval-every-class", [&rc] { rc.eval_every_class = 1; },
        "evaluate on the test set after every class (default: on when test data is given)");
    cmd->add_flag_callback(
        "--no-eval-every-class", [&rc] { rc.eval_every_class = 0; },
        "do not evaluate after every class");
}

// CLI11 only processes config files registered on the root app; a subcommand's
// parse path never reaches _process_config_file, so set_config on a subcommand
// is silently inert. The flat-config contract is applied here instead: keys the
// command line leaves unset are injected as "--key=value" tokens, which makes
// "flags win" literal.
void apply_config_file(const CLI::App& app, std::vector<std::string>& args) {
    std::string sub_name;
    std::string config_path;
    std::set<std::string> given;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& tok = args[i];
        if (tok.rfind("--", 0) == 0) {
            const std::size_t eq = tok.find('=');
            const std::string name = tok.substr(0, eq == std::string::npos ? tok.size() : eq);
            given.insert(name);
            if (name == "--config") {
                if (eq != std::string::npos) {
                    config_path = tok.substr(eq + 1);
                } else if (i + 1 < args.size()) {
                    config_path = args[i + 1];
                }
            }
        } else if (sub_name.empty() && tok.rfind('-', 0) != 0) {
            sub_name = tok;
        }
    }
    if (config_path.empty()) return;
    const CLI::App* sub = sub_name.empty() ? nullptr : app.get_subcommand_no_throw(sub_name);
    if (sub == nullptr) return;  // parse() reports the unknown subcommand itself

    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot read " + config_path);
    std::stringstream text;
    text << in.rdbuf();

    for (const auto& [key, value] : ovacli::parse_flat_config(text.str())) {
        if (key == "config") {
            throw ConfigError("config: a config file cannot name another config file");
        }
        // Skip a key when either spelling of its flag pair was given explicitly.
        const std::string base = key.rfind("no-", 0) == 0 ? key.substr(3) : key;
        if (given.count("--" + base) || given.count("--no-" + base)) continue;
        const CLI::Option* opt = sub->get_option_no_throw("--" + key);
        if (opt == nullptr) {
            throw ConfigError("config: unknown key \"" + key + "\" for " + sub_name);
        }
        if (opt->get_expected() == 0) {
            std::string v;
            for (const char c : value) {
                v += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            }
            if (v == "1" || v == "true" || v == "yes" || v == "on") {
                args.push_back("--" + key);
            } else if (v == "0" || v == "false" || v == "no" || v == "off") {
                if (sub->get_option_no_throw("--no-" + key) == nullptr) {
                    throw ConfigError("config: \"" + key + "\" has no off spelling");
                }
                args.push_back("--no-" + key);
            } else {
                throw ConfigError("config: flag key \"" + key +
                                  "\" needs a true/false value, got \"" + value + "\"");
            }
        } else {
            args.push_back("--" + key + "=" + value);
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"One-versus-All invertible-network continual learner"};
    app.require_subcommand(1);
    RunConfig rc;

    CLI::App* train = app.add_subcommand(
        "train", "Train one expert per class, one class at a time, checkpointing after each");
    add_common_options(train, rc);
    add_dataset_options(train, rc);
    add_test_dataset_options(train, rc);
    add_train_options(train, rc);
    train->add_option("--model", rc.model, "registry file to write (resumes if it exists)")
        ->required();
    train->add_option("--report", rc.report,
                      "report base path; writes <base>.csv and <base>.json");

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a trained registry on a test set");
    add_common_options(eval, rc);
    add_dataset_options(eval, rc);
    eval->add_option("--model", rc.model, "registry file to evaluate")->required();
    eval->add_option("--report", rc.report, "report base path");
    eval->add_option("--mode", rc.mode, "single | multi");
    eval->add_option("--tasks", rc.tasks,
                     "semicolon-separated class groups for --mode multi, e.g. 0-4;5-9");

    CLI::App* predict = app.add_subcommand("predict", "Per-sample class and per-expert scores");
    add_common_options(predict, rc);
    add_dataset_options(predict, rc);
    predict->add_option("--model", rc.model, "registry file")->required();

    CLI::App* baseline =
        app.add_subcommand("baseline", "Nearest-prototype baseline over the same protocol");
    add_common_options(baseline, rc);
    add_dataset_options(baseline, rc);
    add_test_dataset_options(baseline, rc);
    baseline->add_option("--class-order", rc.class_order, "classes to fit prototypes for");
    baseline->add_option("--limit-per-class", rc.limit_per_class,
                         "use only the first N training samples of each class (0 = all)");
    baseline->add_option("--report", rc.report, "report base path");

    CLI::App* inspect =
        app.add_subcommand("inspect", "Parameter counts from a model file or from shape flags");
    add_common_options(inspect, rc);
    inspect->add_option("--model", rc.model, "registry file to describe");
    inspect->add_option("--dim", rc.dim, "input dimension (shape mode)");
    inspect->add_option("--rank", rc.train.rank, "hidden width (shape mode)");
    inspect->add_option("--blocks", rc.train.n_blocks, "coupling blocks (shape mode)");
    inspect->add_option("--classes", rc.classes, "number of classes (shape mode)");

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        apply_config_file(app, args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }
    std::reverse(args.begin(), args.end());  // parse(vector) consumes back-to-front
    try {
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (train->parsed()) return cmd_train(rc);
        if (eval->parsed()) return cmd_eval(rc);
        if (predict->parsed()) return cmd_predict(rc);
        if (baseline->parsed()) return cmd_baseline(rc);
        if (inspect->parsed()) return cmd_inspect(rc);
        std::cerr << "error: no subcommand selected\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ovacli::OutputIoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    }
}
