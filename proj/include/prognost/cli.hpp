// SPDX-License-Identifier: Apache-2.0
//
// Command-line pipeline: ingest -> preprocess -> train -> evaluate, plus
// predict, grad-check and gen-fixture. Stages exchange CSV and model files.
#pragma once

#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prognost/errors.hpp"
#include "prognost/eval.hpp"
#include "prognost/fixtures.hpp"
#include "prognost/ingest.hpp"
#include "prognost/io.hpp"
#include "prognost/model.hpp"
#include "prognost/pipeline.hpp"
#include "prognost/preprocess.hpp"
#include "prognost/train.hpp"

namespace prognost::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// Largest per-block relative error `grad-check` tolerates before exiting 3.
inline constexpr double kGradCheckFailThreshold = 1e-4;

class Cli {
public:
    Cli(std::ostream& out, std::ostream& err) : out_(out), err_(err)
    {
        app_.name("prognost");
        app_.description("LSTM vibration forecasting pipeline for bearing prognostics");
        app_.require_subcommand(1);
        app_.set_help_flag("-h,--help", "Print this help message and exit");
        add_ingest();
        add_preprocess();
        add_train();
        add_evaluate();
        add_predict();
        add_grad_check();
        add_gen_fixture();
    }

    Cli(const Cli&) = delete;
    Cli& operator=(const Cli&) = delete;

    CLI::App& app() { return app_; }

    int run(std::vector<std::string> args)
    {
        std::reverse(args.begin(), args.end());
        try {
            app_.parse(args);
        } catch (const CLI::CallForHelp&) {
            out_ << help_for_parsed();
            return kExitOk;
        } catch (const CLI::CallForAllHelp&) {
            out_ << app_.help("", CLI::AppFormatMode::All);
            return kExitOk;
        } catch (const CLI::ParseError& e) {
            err_ << "error: " << e.what() << "\n" << usage_remedy() << "\n";
            return kExitUsage;
        }
        try {
            return dispatch();
        } catch (const Error& e) {
            err_ << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
            return exit_code_for(e.kind());
        } catch (const std::exception& e) {
            err_ << "error: " << e.what() << "\n";
            return kExitData;
        }
    }

private:
    std::string help_for_parsed() const
    {
        for (const auto* sub : app_.get_subcommands()) {
            return sub->help();
        }
        return app_.help();
    }

    std::string usage_remedy() const
    {
        for (const auto* sub : app_.get_subcommands()) {
            return "run 'prognost " + sub->get_name() + " --help' for usage";
        }
        return "run 'prognost --help' for usage";
    }

    int dispatch()
    {
        if (ingest_->parsed()) return run_ingest();
        if (preprocess_->parsed()) return run_preprocess();
        if (train_->parsed()) return run_train();
        if (evaluate_->parsed()) return run_evaluate();
        if (predict_->parsed()) return run_predict();
        if (grad_check_->parsed()) return run_grad_check();
        if (gen_fixture_->parsed()) return run_gen_fixture();
        err_ << "error: no subcommand\n";
        return kExitUsage;
    }

    // -- ingest -------------------------------------------------------------

    struct IngestOptions {
        std::string ims_dir;
        std::size_t channels = 4;
        std::size_t channel = 0;
        std::string agg = "rms";
        std::string csv;
        std::size_t value_col = 0;
        std::size_t ts_col = 0;
        std::string out;
    } ingest_opts_;
    CLI::Option* ingest_ts_col_ = nullptr;

    void add_ingest()
    {
        auto& o = ingest_opts_;
        ingest_ = app_.add_subcommand("ingest", "Convert a snapshot directory or a CSV column into a timestamp,value series");
        auto* ims = ingest_->add_option("--ims-dir", o.ims_dir, "Directory of snapshot files named yyyy.MM.dd.HH.mm.ss");
        ingest_->add_option("--channels", o.channels, "Columns per snapshot file (dataset 2/3: 4)")->capture_default_str();
        ingest_->add_option("--channel", o.channel, "Zero-based column to aggregate (dataset 2 bearing 1: 0, dataset 3 bearing 3: 2)")->capture_default_str();
        ingest_->add_option("--agg", o.agg, "Per-snapshot aggregation: rms, mean_abs or peak")
            ->check(CLI::IsMember({"rms", "mean_abs", "peak"}))
            ->capture_default_str();
        auto* csv = ingest_->add_option("--csv", o.csv, "Delimited text file holding the series");
        ingest_->add_option("--value-col", o.value_col, "Zero-based value column for --csv")->capture_default_str();
        ingest_ts_col_ = ingest_->add_option("--ts-col", o.ts_col, "Zero-based timestamp column for --csv (default: row index)");
        ingest_->add_option("--out", o.out, "Output series CSV (timestamp,value)")->required();
        ims->excludes(csv);
        csv->excludes(ims);
    }

    int run_ingest()
    {
        const auto& o = ingest_opts_;
        SnapshotSeries series;
        if (!o.ims_dir.empty()) {
            const auto method = *parse_aggregation(o.agg);
            auto loaded = load_ims_series(o.ims_dir, o.channels, o.channel, method);
            for (const auto& w : loaded.warnings) {
                err_ << "warning: " << w << "\n";
            }
            if (!loaded.scan.skipped.empty()) {
                err_ << "skipped " << loaded.scan.skipped.size() << " non-snapshot entries\n";
            }
            series = std::move(loaded.series);
        } else if (!o.csv.empty()) {
            std::optional<std::size_t> ts;
            if (ingest_ts_col_->count() > 0) {
                ts = o.ts_col;
            }
            series = load_csv_series(o.csv, o.value_col, ts);
        } else {
            fail(ErrorKind::usage, "ingest needs --ims-dir or --csv; run 'prognost ingest --help'");
        }
        validate_series(series);
        io::write_file(o.out, series_to_csv(series));
        out_ << "wrote " << series.size() << " points to " << o.out << "\n";
        return kExitOk;
    }

    // -- preprocess ---------------------------------------------------------

    struct PreprocessOptions {
        std::string in;
        std::string out;
        std::size_t outlier_window = OutlierDefaults::window;
        double outlier_k = OutlierDefaults::k;
        std::size_t max_gap = 3;
    } pre_opts_;

    void add_preprocess()
    {
        auto& o = pre_opts_;
        preprocess_ = app_.add_subcommand("preprocess", "Fill short gaps and replace outliers (rolling median +/- k*MAD)");
        preprocess_->add_option("--in", o.in, "Input series CSV (timestamp,value)")->required();
        preprocess_->add_option("--out", o.out, "Cleaned series CSV (timestamp,value)")->required();
        preprocess_->add_option("--outlier-window", o.outlier_window, "Centered rolling window length (odd, >= 3)")->capture_default_str();
        preprocess_->add_option("--outlier-k", o.outlier_k, "MAD multiple beyond which a point is replaced")->capture_default_str();
        preprocess_->add_option("--max-gap", o.max_gap, "Longest run of missing values to interpolate")->capture_default_str();
    }

    int run_preprocess()
    {
        const auto& o = pre_opts_;
        const auto raw = read_series_csv(o.in);
        const auto filled = fill_missing(raw, o.max_gap);
        if (filled.empty()) {
            fail(ErrorKind::empty_dataset, "series has no finite values");
        }
        const auto cleaned = remove_outliers(filled, o.outlier_window, o.outlier_k);
        io::write_file(o.out, series_to_csv(cleaned.series));
        out_ << "wrote " << cleaned.series.size() << " points to " << o.out << " ("
             << raw.size() - filled.size() << " edge points dropped, " << cleaned.replaced.size()
             << " outliers replaced)\n";
        return kExitOk;
    }

    // -- train --------------------------------------------------------------

    struct TrainOptions {
        std::string in;
        std::string config;
        std::uint64_t seed = 0;
        std::string model_out;
        std::string report_out;
        std::string dims;
        std::size_t epochs = 0;
        double lr = 0.0;
        std::size_t batch_size = 0;
        std::size_t window = 0;
        std::string loss;
        double ratio = 0.0;
        double clip_norm = 0.0;
        bool verbose = false;
    } train_opts_;

    struct Override {
        CLI::Option* opt;
        std::string key;
    };
    std::vector<Override> train_overrides_;

    void add_train()
    {
        auto& o = train_opts_;
        train_ = app_.add_subcommand("train", "Fit the stacked LSTM on a cleaned series (scaler fit on the training slice, chronological split)");
        train_->add_option("--in", o.in, "Cleaned series CSV (timestamp,value)")->required();
        train_->add_option("--config", o.config, "key = value file with TrainConfig fields; flags below override it");
        train_->add_option("--model-out", o.model_out, "Output model file")->required();
        train_->add_option("--report-out", o.report_out, "Output per-epoch CSV (epoch,train_loss,test_rmse)")->required();
        auto over = [&](CLI::Option* opt, std::string key) { train_overrides_.push_back({opt, std::move(key)}); };
        over(train_->add_option("--seed", o.seed, "Initialisation seed (default 42)"), "seed");
        over(train_->add_option("--dims", o.dims, "Hidden layer sizes, comma separated (default 128,64)"), "hidden_dims");
        over(train_->add_option("--epochs", o.epochs, "Training epochs (default 100)"), "epochs");
        over(train_->add_option("--lr", o.lr, "Adam learning rate (default 0.001)"), "learning_rate");
        over(train_->add_option("--batch-size", o.batch_size, "Windows per optimizer step (default 50)"), "batch_size");
        over(train_->add_option("--window", o.window, "Input window length W (default 5)"), "window");
        over(train_->add_option("--loss", o.loss, "Loss mode: mse or bce (default mse)")->check(CLI::IsMember({"mse", "bce"})), "loss_mode");
        over(train_->add_option("--ratio", o.ratio, "Training fraction of the windows (default 0.7)"), "train_ratio");
        over(train_->add_option("--clip-norm", o.clip_norm, "Global gradient max-norm, 0 disables (default 0)"), "clip_norm");
        train_->add_flag("--verbose", o.verbose, "Print one line per epoch to stderr");
    }

    int run_train()
    {
        const auto& o = train_opts_;
        TrainConfig cfg;
        if (!o.config.empty()) {
            cfg = parse_train_config(io::read_file(o.config));
        }
        for (const auto& ov : train_overrides_) {
            if (ov.opt->count() > 0) {
                set_config_value(cfg, ov.key, ov.opt->as<std::string>());
            }
        }
        cfg.validate();
        const auto series = read_series_csv(o.in);
        const auto data = prepare_dataset(series, cfg.window, cfg.train_ratio);
        auto result = train(data.split, cfg, [&](const EpochRecord& r) {
            if (o.verbose) {
                err_ << "epoch " << r.epoch << " train_loss " << text::format_double(r.train_loss)
                     << " test_rmse " << text::format_double(r.test_rmse) << "\n";
            }
        });
        result.model.scaler = data.scaler;
        result.report.model_path = o.model_out;
        save_model(result.model, o.model_out);
        io::write_file(o.report_out, report_to_csv(result.report));
        const auto& last = result.report.epochs.back();
        out_ << "trained " << cfg.epochs << " epochs on " << data.split.train.size() << " windows ("
             << data.split.test.size() << " held out); final train_loss "
             << text::format_double(last.train_loss) << ", test_rmse "
             << text::format_double(last.test_rmse) << "\n";
        return kExitOk;
    }

    // -- evaluate -----------------------------------------------------------

    struct EvaluateOptions {
        std::string model;
        std::string in;
        std::string metrics_out;
        std::string trace_out;
        std::string space = "scaled";
        std::size_t window = kDefaultWindow;
        double ratio = kDefaultTrainRatio;
    } eval_opts_;

    void add_evaluate()
    {
        auto& o = eval_opts_;
        evaluate_ = app_.add_subcommand("evaluate", "One-step-ahead predictions and metrics for the train and test segments");
        evaluate_->add_option("--model", o.model, "Model file written by train")->required();
        evaluate_->add_option("--in", o.in, "Cleaned series CSV (timestamp,value)")->required();
        evaluate_->add_option("--metrics-out", o.metrics_out, "Output metrics CSV")->required();
        evaluate_->add_option("--trace-out", o.trace_out, "Output trace CSV (origin_index,timestamp,actual,predicted,split)")->required();
        evaluate_->add_option("--space", o.space, "Report values scaled to [0,1] or in original units")
            ->check(CLI::IsMember({"scaled", "original"}))
            ->capture_default_str();
        evaluate_->add_option("--window", o.window, "Window length used in training")->capture_default_str();
        evaluate_->add_option("--ratio", o.ratio, "Training fraction used in training")->capture_default_str();
    }

    int run_evaluate()
    {
        const auto& o = eval_opts_;
        const auto model = load_model(o.model);
        const auto space = *parse_space(o.space);
        const auto series = read_series_csv(o.in);
        PreparedData data;
        if (model.scaler) {
            data = prepare_dataset(series, o.window, o.ratio, model.scaler);
        } else {
            if (space == Space::original) {
                fail(ErrorKind::config, "model has no stored scaler; original space unavailable");
            }
            // Input taken as already scaled.
            data = prepare_dataset(series, o.window, o.ratio, MinMaxScaler{0.0, 1.0});
        }
        auto train_trace = one_step_predictions(model, data.split.train, model.scaler, space, SplitTag::train);
        const auto test_trace = one_step_predictions(model, data.split.test, model.scaler, space, SplitTag::test);

        auto to_space = [&](std::vector<double> v) {
            if (space == Space::original) {
                for (auto& x : v) x = model.scaler->inverse(x);
            }
            return v;
        };
        const auto test_metrics = compute_metrics(test_trace.actual(), test_trace.predicted(), space);
        const auto train_metrics = compute_metrics(train_trace.actual(), train_trace.predicted(), space);
        const auto persistence = compute_metrics(test_trace.actual(),
                                                 to_space(persistence_predictions(data.split.test)), space);
        std::string metrics = metrics_csv_header();
        metrics += metrics_csv_row("train", train_metrics);
        metrics += metrics_csv_row("test", test_metrics);
        metrics += metrics_csv_row("persistence_test", persistence);
        io::write_file(o.metrics_out, metrics);

        PredictionTrace all = std::move(train_trace);
        all.rows.insert(all.rows.end(), test_trace.rows.begin(), test_trace.rows.end());
        io::write_file(o.trace_out, trace_to_csv(all));
        out_ << "test rmse " << text::format_double(test_metrics.rmse) << " mae "
             << text::format_double(test_metrics.mae) << " (" << to_string(space)
             << " space, n=" << test_metrics.n << "); persistence rmse "
             << text::format_double(persistence.rmse) << "\n";
        return kExitOk;
    }

    // -- predict ------------------------------------------------------------

    struct PredictOptions {
        std::string model;
        std::string window;
    } predict_opts_;

    void add_predict()
    {
        auto& o = predict_opts_;
        predict_ = app_.add_subcommand("predict", "Predict the next value from one window of scaled values");
        predict_->add_option("--model", o.model, "Model file written by train")->required();
        predict_->add_option("--window", o.window, "Comma-separated window values, oldest first")->required();
    }

    int run_predict()
    {
        const auto& o = predict_opts_;
        const auto model = load_model(o.model);
        std::vector<double> window;
        for (auto tok : text::split_on(o.window, ',')) {
            const auto v = text::parse_double(text::trim(tok));
            if (!v || !std::isfinite(*v)) {
                fail(ErrorKind::usage, "--window value '" + std::string(tok) + "' is not a number");
            }
            window.push_back(*v);
        }
        out_ << text::format_double(predict(model, window)) << "\n";
        return kExitOk;
    }

    // -- grad-check ---------------------------------------------------------

    struct GradCheckOptions {
        std::string dims = "4,3";
        std::uint64_t seed = 7;
        double eps = 1e-6;
        std::size_t window = kDefaultWindow;
        std::string loss = "both";
    } gc_opts_;

    void add_grad_check()
    {
        auto& o = gc_opts_;
        grad_check_ = app_.add_subcommand("grad-check", "Compare BPTT gradients with central finite differences");
        grad_check_->add_option("--dims", o.dims, "Hidden layer sizes, comma separated")->capture_default_str();
        grad_check_->add_option("--seed", o.seed, "Seed for the random network and data")->capture_default_str();
        grad_check_->add_option("--eps", o.eps, "Finite-difference step")->capture_default_str();
        grad_check_->add_option("--window", o.window, "Window length")->capture_default_str();
        grad_check_->add_option("--loss", o.loss, "Loss mode to check: mse, bce or both")
            ->check(CLI::IsMember({"mse", "bce", "both"}))
            ->capture_default_str();
    }

    int run_grad_check()
    {
        const auto& o = gc_opts_;
        std::vector<LossMode> modes;
        if (o.loss != "bce") modes.push_back(LossMode::mse);
        if (o.loss != "mse") modes.push_back(LossMode::bce);
        double worst = 0.0;
        for (auto mode : modes) {
            TrainConfig cfg;
            cfg.hidden_dims = parse_dims(o.dims);
            cfg.window = o.window;
            cfg.loss_mode = mode;
            cfg.validate();
            const auto report = grad_check(cfg, o.seed, o.eps);
            for (const auto& b : report.blocks) {
                out_ << to_string(mode) << " " << b.block << " max_rel_error "
                     << text::format_double(b.max_rel_error) << " at (" << b.worst_row << ","
                     << b.worst_col << ")\n";
            }
            worst = std::max(worst, report.max_rel_error());
        }
        out_ << "worst " << text::format_double(worst) << "\n";
        if (!(worst <= kGradCheckFailThreshold)) {
            err_ << "error [numeric]: gradient check exceeded " << kGradCheckFailThreshold << "\n";
            return kExitNumeric;
        }
        return kExitOk;
    }

    // -- gen-fixture --------------------------------------------------------

    struct FixtureOptions {
        std::string kind;
        std::size_t n = 0;
        std::string out;
        std::uint64_t seed = 1;
    } fx_opts_;

    void add_gen_fixture()
    {
        auto& o = fx_opts_;
        gen_fixture_ = app_.add_subcommand("gen-fixture", "Write a deterministic synthetic series (sine or degradation)");
        gen_fixture_->add_option("--kind", o.kind, "Fixture shape: sine or degradation")
            ->check(CLI::IsMember({"sine", "degradation"}))
            ->required();
        gen_fixture_->add_option("--n", o.n, "Number of points")->required();
        gen_fixture_->add_option("--out", o.out, "Output series CSV (timestamp,value)")->required();
        gen_fixture_->add_option("--seed", o.seed, "Noise seed (degradation only)")->capture_default_str();
    }

    int run_gen_fixture()
    {
        const auto& o = fx_opts_;
        const auto series = make_fixture(*parse_fixture_kind(o.kind), o.n, o.seed);
        io::write_file(o.out, series_to_csv(series));
        out_ << "wrote " << series.size() << " points to " << o.out << "\n";
        return kExitOk;
    }

    std::ostream& out_;
    std::ostream& err_;
    CLI::App app_;
    CLI::App* ingest_ = nullptr;
    CLI::App* preprocess_ = nullptr;
    CLI::App* train_ = nullptr;
    CLI::App* evaluate_ = nullptr;
    CLI::App* predict_ = nullptr;
    CLI::App* grad_check_ = nullptr;
    CLI::App* gen_fixture_ = nullptr;
};

/// Runs one command line (program name excluded) and returns its exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr)
{
    Cli cli(out, err);
    return cli.run(args);
}

} // namespace prognost::cli
