// tdln — batch fault-detection CLI.
//
//   tdln gen     write a synthetic labeled benchmark (train.csv / test.csv)
//   tdln train   fit a model from a labeled series CSV
//   tdln detect  run a saved model over a buffer CSV, write detections
//   tdln eval    score detections against ground-truth labels
//
// Every command prints its fully resolved configuration, and every command
// is deterministic under a fixed --seed and fixed inputs.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "tdln/csv.hpp"
#include "tdln/datagen.hpp"
#include "tdln/metrics.hpp"
#include "tdln/model_io.hpp"
#include "tdln/pipeline.hpp"

namespace {

void echo_config(const CLI::App& cmd) {
    std::cout << "resolved config [" << cmd.get_name() << "]\n";
    std::string block = cmd.config_to_str(true, false);
    std::cout << block;
    if (block.empty() || block.back() != '\n') std::cout << '\n';
}

// Flat key=value config reader: one key per line, full-line # comments,
// optional double quotes around the value. Returns --key=value tokens for
// every key not already present on the command line, so explicit flags win.
std::vector<std::string> config_tokens(const std::string& path,
                                       const std::vector<std::string>& given) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file '" + path + "'");
    auto trim = [](const std::string& s) {
        const char* ws = " \t\r";
        const auto b = s.find_first_not_of(ws);
        if (b == std::string::npos) return std::string();
        return s.substr(b, s.find_last_not_of(ws) - b + 1);
    };
    auto flag_given = [&given](const std::string& flag) {
        for (const std::string& arg : given)
            if (arg == flag || arg.rfind(flag + "=", 0) == 0) return true;
        return false;
    };
    std::vector<std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty key");
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        if (value == "{}") continue;  // explicit empty list, same as the default
        if (!flag_given("--" + key)) out.push_back("--" + key + "=" + value);
    }
    return out;
}

// CLI11's own config machinery never runs for per-subcommand configs, so the
// file is expanded into ordinary tokens before the real parse. Unknown keys
// surface as unknown flags.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size())
            config_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0)
            config_path = args[i].substr(9);
    }
    if (config_path.empty()) return args;
    const std::vector<std::string> extra = config_tokens(config_path, args);
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

struct GenArgs {
    std::string config;
    std::string out = ".";
    std::uint64_t seed = 1;
    int classes = 5;
    std::size_t channels = 12;
    std::size_t train_runs = 40;
    std::size_t test_runs = 10;
    std::size_t train_len = 500;
    std::size_t test_len = 960;
    std::size_t train_onset = 20;
    double magnitude_scale = 1.0;
    std::size_t affected_channels = 2;
};

int run_gen(const GenArgs& args) {
    tdln::BenchmarkSpec spec;
    spec.process = tdln::default_process_spec(args.channels, args.seed);
    spec.class_count = args.classes;
    spec.train_runs = args.train_runs;
    spec.test_runs = args.test_runs;
    spec.train_length = args.train_len;
    spec.test_length = args.test_len;
    spec.train_onset = args.train_onset;
    spec.magnitude_scale = args.magnitude_scale;
    spec.affected_channel_count = args.affected_channels;

    const tdln::BenchmarkData data = tdln::generate_benchmark(spec);
    std::filesystem::create_directories(args.out);
    const std::string train_path = (std::filesystem::path(args.out) / "train.csv").string();
    const std::string test_path = (std::filesystem::path(args.out) / "test.csv").string();
    tdln::write_series_csv(train_path, data.train);
    tdln::write_series_csv(test_path, data.test);

    std::cout << tdln::format_assignment(data.assignment);
    std::cout << "test onset: " << tdln::test_onset_for_length(spec.test_length)
              << " (train onset: " << spec.train_onset << ")\n";
    std::cout << "wrote " << train_path << " (" << data.train.steps() << " rows), " << test_path
              << " (" << data.test.steps() << " rows)\n";
    return 0;
}

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out = "model.tdln";
    std::uint64_t seed = 1;
    std::size_t w = 30;
    std::size_t s = 20;
    std::size_t epochs = 50;
    std::size_t batch_size = 1024;
    double lr = 1e-3;
    double dropout = 0.4;
    std::size_t blstm_hidden = 128;
    std::size_t lstm_hidden = 128;
    std::vector<std::size_t> fcnn_sizes{500, 180};
    std::size_t n_estimators = 112;
    std::size_t max_depth = 31;
    std::size_t subset_size = 0;
    bool bootstrap = false;
    std::string mode = "full";
    int refine_rounds = 1;
    std::vector<int> drop;
    unsigned threads = 0;
    double val_fraction = 0.2;
    bool keep_best = false;
};

int run_train(const TrainArgs& args) {
    if (args.fcnn_sizes.size() != 2)
        throw CLI::ValidationError("--fcnn-sizes", "expected exactly two sizes, e.g. 500,180");

    tdln::LoadedSeries loaded = tdln::read_series_csv(args.data);
    if (!loaded.labeled)
        throw std::runtime_error("training data '" + args.data + "' has no label column");
    tdln::RawSeries raw = std::move(loaded.series);
    if (!args.drop.empty()) {
        tdln::DropResult dropped = tdln::drop_classes(raw, args.drop);
        std::cout << tdln::format_drop_mapping(dropped.old_to_new);
        raw = std::move(dropped.series);
    }

    tdln::FitConfig config;
    config.window.width = args.w;
    config.window.stride = args.s;
    config.arch.blstm_hidden = args.blstm_hidden;
    config.arch.lstm_hidden = args.lstm_hidden;
    config.arch.fc1_units = args.fcnn_sizes[0];
    config.arch.fc2_units = args.fcnn_sizes[1];
    config.arch.dropout_rate = args.dropout;
    config.train.epochs = args.epochs;
    config.train.batch_size = args.batch_size;
    config.train.learning_rate = args.lr;
    config.train.seed = args.seed;
    config.train.threads = args.threads;
    config.train.keep_best_checkpoint = args.keep_best;
    config.forest.n_estimators = args.n_estimators;
    config.forest.max_depth = args.max_depth;
    config.forest.subset_size = args.subset_size;
    config.forest.bootstrap = args.bootstrap;
    config.mode = tdln::parse_mode(args.mode);
    config.refine_rounds = args.refine_rounds;
    config.val_fraction = args.val_fraction;

    const tdln::TdlnModel model = tdln::fit_offline(raw, config, &std::cerr);
    tdln::save_model(model, args.out);

    if (!model.curve.train_accuracy.empty()) {
        std::cout << "training curve (per epoch):\n";
        std::cout << "epoch\ttrain_acc\ttrain_loss\tval_acc\tval_loss\tseconds\n";
        for (std::size_t e = 0; e < model.curve.train_accuracy.size(); ++e) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%zu\t%.6f\t%.6f\t%.6f\t%.6f\t%.3f\n", e,
                          model.curve.train_accuracy[e], model.curve.train_loss[e],
                          model.curve.val_accuracy[e], model.curve.val_loss[e],
                          model.curve.seconds[e]);
            std::cout << buf;
        }
    }
    std::cout << "validation detection rate per class:\n";
    double sum = 0.0;
    std::size_t defined = 0;
    for (std::size_t c = 0; c < model.validation_detection_rate.size(); ++c) {
        const auto& v = model.validation_detection_rate[c];
        std::cout << "  class " << c << ": ";
        if (v) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6f", *v);
            std::cout << buf << "\n";
            sum += *v;
            ++defined;
        } else {
            std::cout << "n/a\n";
        }
    }
    if (defined > 0) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", sum / static_cast<double>(defined));
        std::cout << "  macro: " << buf << "\n";
    }
    std::cout << "model written to " << args.out << "\n";
    return 0;
}

struct DetectArgs {
    std::string config;
    std::string model;
    std::string data;
    std::string out = "detections.csv";
    bool ignore_labels = false;
};

int run_detect(const DetectArgs& args) {
    const tdln::TdlnModel model = tdln::load_model(args.model);
    const tdln::LoadedSeries loaded = tdln::read_series_csv(args.data);
    // Detection never reads labels; --ignore-labels only documents intent on
    // labeled inputs.
    (void)args.ignore_labels;
    const std::vector<tdln::Detection> detections =
        tdln::detect_online(model, loaded.series.values);
    std::ofstream os(args.out, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + args.out + "' for writing");
    tdln::write_detections_csv(os, model, detections);
    if (!os) throw std::runtime_error("write to '" + args.out + "' failed");
    std::cout << "wrote " << detections.size() << " detections to " << args.out << "\n";
    return 0;
}

struct EvalArgs {
    std::string config;
    std::string detections;
    std::string truth;
    std::string roc_out;
};

int run_eval(const EvalArgs& args) {
    std::ifstream is(args.detections, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + args.detections + "'");
    const tdln::DetectionFile file = tdln::read_detections_csv(is, args.detections);

    const tdln::LoadedSeries loaded = tdln::read_series_csv(args.truth);
    if (!loaded.labeled)
        throw std::runtime_error("ground truth '" + args.truth + "' has no label column");
    if (loaded.series.channels() != file.channels)
        throw std::runtime_error("detection file was made from " +
                                 std::to_string(file.channels) + " channels, truth has " +
                                 std::to_string(loaded.series.channels()));

    const tdln::AlignedTruth aligned = tdln::align_detections(file, loaded.series);
    if (aligned.predicted.empty())
        throw std::runtime_error("no evaluable windows after alignment");
    for (int label : aligned.actual)
        if (label >= file.class_count)
            throw std::runtime_error("truth label " + std::to_string(label) +
                                     " outside the model's " +
                                     std::to_string(file.class_count) + " classes");

    const tdln::MetricsReport report = tdln::compute_metrics(
        aligned.predicted, aligned.actual, file.class_count, aligned.probabilities);

    std::cout << "windows evaluated: " << aligned.predicted.size() << "\n";
    std::cout << "excluded: " << aligned.mixed_excluded << " mixed-label, "
              << aligned.provisional_excluded << " provisional, "
              << aligned.out_of_range_excluded << " out-of-range\n";
    std::cout << tdln::format_report(report);
    std::cout << "--- machine block ---\n";
    std::cout << tdln::format_report_kv(report);
    std::cout << "mixed_excluded=" << aligned.mixed_excluded << "\n";
    std::cout << "provisional_excluded=" << aligned.provisional_excluded << "\n";
    std::cout << "out_of_range_excluded=" << aligned.out_of_range_excluded << "\n";

    if (!args.roc_out.empty()) {
        std::ofstream roc(args.roc_out, std::ios::binary);
        if (!roc) throw std::runtime_error("cannot open '" + args.roc_out + "' for writing");
        bool first = true;
        for (std::size_t c = 0; c < static_cast<std::size_t>(file.class_count); ++c) {
            tdln::Vector scores(aligned.predicted.size());
            std::vector<int> positive(aligned.predicted.size());
            for (std::size_t n = 0; n < aligned.predicted.size(); ++n) {
                scores[n] = aligned.probabilities(n, c);
                positive[n] = aligned.actual[n] == static_cast<int>(c) ? 1 : 0;
            }
            const auto curve = tdln::roc_curve(scores, positive);
            if (!curve) continue;
            if (first) {
                tdln::write_roc_csv(roc, c, *curve);
                first = false;
            } else {
                // Append without repeating the header.
                char buf[128];
                for (const tdln::RocPoint& p : *curve) {
                    std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12f,%.12f\n", c, p.threshold,
                                  p.fpr, p.tpr);
                    roc << buf;
                }
            }
        }
        std::cout << "roc points written to " << args.roc_out << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TDLN-trees fault detection toolkit"};
    app.require_subcommand(1);

    GenArgs gen_args;
    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic labeled benchmark");
    gen->add_option("--config", gen_args.config, "config file, key=value lines, # comments");
    gen->option_defaults()->always_capture_default(true);
    gen->add_option("--out", gen_args.out, "output directory");
    gen->add_option("--seed", gen_args.seed, "generator seed");
    gen->add_option("--classes", gen_args.classes, "class count incl. normal")
        ->check(CLI::Range(2, 1000));
    gen->add_option("--channels", gen_args.channels, "channel count")->check(CLI::Range(1, 4096));
    gen->add_option("--train-runs", gen_args.train_runs, "train runs per class");
    gen->add_option("--test-runs", gen_args.test_runs, "test runs per class");
    gen->add_option("--train-len", gen_args.train_len, "train run length");
    gen->add_option("--test-len", gen_args.test_len, "test run length");
    gen->add_option("--train-onset", gen_args.train_onset, "train fault onset row");
    gen->add_option("--magnitude-scale", gen_args.magnitude_scale,
                    "scale factor on default fault magnitudes");
    gen->add_option("--affected-channels", gen_args.affected_channels,
                    "channels perturbed per fault class");

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "fit a model from a labeled series CSV");
    train->add_option("--config", train_args.config, "config file, key=value lines, # comments");
    train->option_defaults()->always_capture_default(true);
    train->add_option("data", train_args.data, "labeled training CSV")->required();
    train->add_option("--out", train_args.out, "model output path");
    train->add_option("--seed", train_args.seed, "training seed");
    train->add_option("--w", train_args.w, "window width");
    train->add_option("--s", train_args.s, "window stride");
    train->add_option("--epochs", train_args.epochs, "training epochs");
    train->add_option("--batch-size", train_args.batch_size, "minibatch size");
    train->add_option("--lr", train_args.lr, "Adam learning rate");
    train->add_option("--dropout", train_args.dropout, "dropout rate after the first FC layer");
    train->add_option("--blstm-hidden", train_args.blstm_hidden, "BLSTM units per direction");
    train->add_option("--lstm-hidden", train_args.lstm_hidden, "LSTM units");
    train->add_option("--fcnn-sizes", train_args.fcnn_sizes,
                      "FCNN layer sizes as fc1,fc2 (e.g. 500,180)")
        ->delimiter(',');
    train->add_option("--n-estimators", train_args.n_estimators, "forest size");
    train->add_option("--max-depth", train_args.max_depth, "forest max depth");
    train->add_option("--subset-size", train_args.subset_size,
                      "features per tree (0 = ceil(sqrt(d)))");
    train->add_flag("--bootstrap", train_args.bootstrap, "bootstrap-resample per tree");
    train->add_option("--mode", train_args.mode, "full, dl_only or ml_only")
        ->check(CLI::IsMember({"full", "dl_only", "ml_only"}));
    train->add_option("--refine-rounds", train_args.refine_rounds,
                      "DL/ML alternation rounds (>= 1)");
    train->add_option("--drop-classes", train_args.drop,
                      "classes to drop before training (labels re-densified)")
        ->delimiter(',');
    train->add_option("--threads", train_args.threads, "worker threads (0 = hardware)");
    train->add_option("--val-fraction", train_args.val_fraction, "validation split fraction");
    train->add_flag("--keep-best", train_args.keep_best,
                    "restore the best-validation-accuracy epoch");

    DetectArgs detect_args;
    CLI::App* detect = app.add_subcommand("detect", "run a saved model over a buffer CSV");
    detect->add_option("--config", detect_args.config, "config file, key=value lines, # comments");
    detect->option_defaults()->always_capture_default(true);
    detect->add_option("model", detect_args.model, "model file from train")->required();
    detect->add_option("data", detect_args.data, "buffer CSV (labels ignored if present)")
        ->required();
    detect->add_option("--out", detect_args.out, "detection CSV output path");
    detect->add_flag("--ignore-labels", detect_args.ignore_labels,
                     "accept a labeled CSV and ignore its labels");

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "score detections against ground truth");
    eval->add_option("--config", eval_args.config, "config file, key=value lines, # comments");
    eval->option_defaults()->always_capture_default(true);
    eval->add_option("detections", eval_args.detections, "detection CSV from detect")->required();
    eval->add_option("truth", eval_args.truth, "labeled ground-truth CSV")->required();
    eval->add_option("--roc-out", eval_args.roc_out, "write per-class ROC points to this CSV");

    std::vector<std::string> args;
    try {
        args = expand_config(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) {
            echo_config(*gen);
            return run_gen(gen_args);
        }
        if (train->parsed()) {
            echo_config(*train);
            return run_train(train_args);
        }
        if (detect->parsed()) {
            echo_config(*detect);
            return run_detect(detect_args);
        }
        if (eval->parsed()) {
            echo_config(*eval);
            return run_eval(eval_args);
        }
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
