#include "automixer/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "automixer/errors.hpp"
#include "automixer/optim.hpp"

namespace automixer {

namespace {

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(const ParameterList& params) {
    Snapshot s;
    s.reserve(params.size());
    for (const auto& p : params) {
        const auto v = p.tensor.values();
        s.emplace_back(v.begin(), v.end());
    }
    return s;
}

void restore(const ParameterList& params, const Snapshot& s) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].tensor;
        std::copy(s[i].begin(), s[i].end(), t.mutable_values().begin());
    }
}

std::vector<std::size_t> iota_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

template <class F>
void for_each_batch(const std::vector<std::size_t>& order, std::size_t batch, F&& f) {
    for (std::size_t start = 0; start < order.size(); start += batch) {
        const auto len = std::min(batch, order.size() - start);
        f(std::span<const std::size_t>(order.data() + start, len));
    }
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows) {
    const auto width = table.dim(1);
    const auto v = table.values();
    std::vector<double> out;
    out.reserve(rows.size() * width);
    for (auto r : rows) out.insert(out.end(), v.begin() + static_cast<std::ptrdiff_t>(r * width),
                                   v.begin() + static_cast<std::ptrdiff_t>((r + 1) * width));
    return Tensor({rows.size(), width}, std::move(out));
}

void check_finite(double loss, const char* phase, std::size_t epoch, std::size_t step) {
    if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << phase << ": non-finite training loss at epoch " << epoch << ", step " << step;
        throw TrainingError(os.str());
    }
}

Tensor task_loss(const AutoMixerModel& model, const Tensor& x, const Tensor& target, const ForwardContext& ctx) {
    if (model.config().task == Task::event_classify) return loss_bce_logits(model.classify(x, ctx), target);
    return loss_mse(model.forecast(x, ctx), target);
}

Tensor concat_batches(const std::vector<Tensor>& parts) {
    if (parts.size() == 1) return parts.front();
    std::size_t rows = 0;
    Shape tail(parts.front().shape().begin() + 1, parts.front().shape().end());
    std::vector<double> v;
    for (const auto& p : parts) {
        rows += p.dim(0);
        const auto pv = p.values();
        v.insert(v.end(), pv.begin(), pv.end());
    }
    Shape shape{rows};
    shape.insert(shape.end(), tail.begin(), tail.end());
    return Tensor(std::move(shape), std::move(v));
}

std::optional<double> try_pcc(const Tensor& pred, const Tensor& actual, const std::vector<std::size_t>& mask) {
    try {
        return pcc_masked(pred, actual, mask);
    } catch (const DataError&) {
        return std::nullopt;
    }
}

void fill_forecast_metrics(MetricReport& r, const Tensor& pred, const Tensor& actual, const ChannelSchema& schema) {
    r.per_channel_mse = per_channel_mse(pred, actual);
    const auto kpis = schema.kpi_indices();
    const auto events = schema.event_indices();
    if (!kpis.empty()) {
        r.kpi_mse = mse_masked(pred, actual, kpis);
        r.kpi_pcc = try_pcc(pred, actual, kpis);
    }
    if (!events.empty()) {
        r.event_mse = mse_masked(pred, actual, events);
        r.event_pcc = try_pcc(pred, actual, events);
    }
}

}  // namespace

nlohmann::ordered_json EpochRecord::to_json() const {
    return {{"phase", phase}, {"epoch", epoch}, {"train_loss", train_loss}, {"val_loss", val_loss},
            {"improved", improved}};
}

void TrainSpec::validate() const {
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
    if (early_stop && patience == 0) throw ConfigError("patience must be >= 1");
}

StopDecision early_stop_update(EarlyStopState& state, double val_loss) {
    ++state.epoch;
    if (!std::isfinite(val_loss)) {
        state.diagnostic = "non-finite validation loss at epoch " + std::to_string(state.epoch);
        return StopDecision::stop;
    }
    if (val_loss < state.best_val_loss - kMinImprovement) {
        state.best_val_loss = val_loss;
        state.best_epoch = state.epoch;
        state.epochs_since_improve = 0;
    } else {
        ++state.epochs_since_improve;
    }
    return state.epochs_since_improve >= state.patience ? StopDecision::stop : StopDecision::keep_going;
}

// ---- pretraining ----------------------------------------------------------

PretrainResult pretrain(const PreparedDataset& data, const AutoMixerConfig& config, const TrainSpec& spec) {
    spec.validate();
    const auto channels = data.schema().size();
    const auto compressed = compressed_channels(channels, config.cr);
    std::mt19937_64 rng(spec.seed);
    auto ae = ChannelAutoEncoder::random(config.cell, channels, compressed, rng);
    const auto params = ae.parameters();
    AdamState adam(params, AdamOptions{spec.lr});

    const auto& train = data.train_windows();
    const auto& val = data.val_windows();
    if (train.empty() || val.empty()) throw DataError("pretraining needs non-empty train and validation windows");

    auto val_loss = [&] {
        NoGradGuard guard;
        double total = 0.0;
        for_each_batch(iota_indices(val.size()), 64, [&](std::span<const std::size_t> idx) {
            total += reconstruction_loss(ae, val.batch_x(idx)).item() * static_cast<double>(idx.size());
        });
        return total / static_cast<double>(val.size());
    };

    PretrainResult result;
    EarlyStopState stop;
    stop.patience = spec.patience;
    Snapshot best = snapshot(params);
    result.best_val_loss = val_loss();
    std::vector<std::size_t> order = iota_indices(train.size());
    for (std::size_t epoch = 1; epoch <= spec.epochs_max; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        std::size_t step = 0;
        for_each_batch(order, spec.batch_size, [&](std::span<const std::size_t> idx) {
            zero_grads(params);
            const Tensor loss = reconstruction_loss(ae, train.batch_x(idx));
            check_finite(loss.item(), "pretrain", epoch, ++step);
            backward(loss);
            clip_grad_norm(params, spec.clip_norm);
            adam_step(params, adam);
            total += loss.item() * static_cast<double>(idx.size());
        });
        EpochRecord rec{"pretrain", epoch, total / static_cast<double>(train.size()), val_loss(), false};
        const auto decision = early_stop_update(stop, rec.val_loss);
        rec.improved = stop.best_epoch == epoch;
        if (rec.improved) best = snapshot(params);
        result.history.push_back(rec);
        if (spec.progress) spec.progress(rec);
        if (!stop.diagnostic.empty()) throw TrainingError("pretrain: " + stop.diagnostic);
        if (spec.early_stop && decision == StopDecision::stop) break;
        if (spec.stop_below_train_loss && rec.train_loss < *spec.stop_below_train_loss) break;
    }
    if (stop.best_epoch > 0) {
        restore(params, best);
        result.best_val_loss = stop.best_val_loss;
    }
    result.best_epoch = stop.best_epoch;
    result.autoencoder = ae;

    nlohmann::ordered_json meta;
    meta["phase"] = "pretrain";
    meta["seed"] = spec.seed;
    meta["cr"] = config.cr;
    meta["sl"] = config.sl;
    meta["fl"] = config.fl;
    meta["best_epoch"] = result.best_epoch;
    meta["best_val_loss"] = result.best_val_loss;
    meta["epochs_run"] = result.history.size();
    meta["schema"] = schema_to_json(data.schema());
    result.checkpoint = autoencoder_checkpoint(ae, std::move(meta));
    return result;
}

// ---- finetuning -----------------------------------------------------------

Tensor window_labels(const WindowSet& raw_windows, const ChannelSchema& schema, std::span<const std::size_t> indices) {
    const auto e = schema.event_indices().size();
    if (e == 0) throw DataError("event labels need at least one it-event channel");
    std::vector<double> v;
    v.reserve(indices.size() * e);
    for (auto i : indices) {
        for (int label : event_labels(raw_windows[i].y, schema)) v.push_back(label);
    }
    return Tensor({indices.size(), e}, std::move(v));
}

Tensor predict_forecasts(const AutoMixerModel& model, const WindowSet& windows, std::size_t batch_size) {
    NoGradGuard guard;
    const ForwardContext eval{false, nullptr};
    std::vector<Tensor> parts;
    for_each_batch(iota_indices(windows.size()), batch_size, [&](std::span<const std::size_t> idx) {
        parts.push_back(model.forecast(windows.batch_x(idx), eval));
    });
    return concat_batches(parts);
}

double evaluate_loss(const AutoMixerModel& model, const WindowSet& windows, const WindowSet& raw_windows,
                     std::size_t batch_size) {
    NoGradGuard guard;
    const ForwardContext eval{false, nullptr};
    const bool classify = model.config().task == Task::event_classify;
    double total = 0.0;
    for_each_batch(iota_indices(windows.size()), batch_size, [&](std::span<const std::size_t> idx) {
        const Tensor target =
            classify ? window_labels(raw_windows, raw_windows.frame().schema, idx) : windows.batch_y(idx);
        total += task_loss(model, windows.batch_x(idx), target, eval).item() * static_cast<double>(idx.size());
    });
    return total / static_cast<double>(windows.size());
}

FinetuneResult finetune(const PreparedDataset& data, const AutoMixerConfig& config, const TrainSpec& spec,
                        const ChannelAutoEncoder* pretrained) {
    spec.validate();
    config.validate();
    const auto& schema = data.schema();
    const bool classify = config.task == Task::event_classify;
    const auto labels = schema.event_indices().size();
    if (config.task != Task::kpi_forecast && labels == 0) {
        throw DataError("task " + to_string(config.task) + " needs at least one it-event channel");
    }
    if (spec.mode == TrainMode::pretrained) {
        if (!config.compress) throw ConfigError("PT mode needs compress=true (no autoencoder to pretrain)");
        if (pretrained == nullptr) throw ConfigError("PT mode needs a pretrained autoencoder checkpoint");
    }
    const auto test_reads_before = data.test_access_count();

    std::mt19937_64 rng(spec.seed);
    auto model = AutoMixerModel::create(config, schema.size(), labels, rng);
    if (spec.mode == TrainMode::pretrained) model.load_autoencoder(*pretrained);
    const auto params = model.parameters();
    AdamState adam(params, AdamOptions{spec.lr});

    const auto& train = data.train_windows();
    const auto& raw_train = data.raw_train_windows();
    const auto& val = data.val_windows();
    const auto& raw_val = data.raw_val_windows();
    if (train.empty() || val.empty()) throw DataError("finetuning needs non-empty train and validation windows");
    Tensor train_labels;
    if (classify) train_labels = window_labels(raw_train, schema, iota_indices(train.size()));

    FinetuneResult result;
    EarlyStopState stop;
    stop.patience = spec.patience;
    Snapshot best = snapshot(params);
    result.best_val_loss = evaluate_loss(model, val, raw_val);
    const ForwardContext training{true, &rng};
    std::vector<std::size_t> order = iota_indices(train.size());
    for (std::size_t epoch = 1; epoch <= spec.epochs_max; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        std::size_t step = 0;
        for_each_batch(order, spec.batch_size, [&](std::span<const std::size_t> idx) {
            zero_grads(params);
            const Tensor target = classify ? gather_rows(train_labels, idx) : train.batch_y(idx);
            const Tensor loss = task_loss(model, train.batch_x(idx), target, training);
            check_finite(loss.item(), "finetune", epoch, ++step);
            backward(loss);
            clip_grad_norm(params, spec.clip_norm);
            adam_step(params, adam);
            total += loss.item() * static_cast<double>(idx.size());
        });
        EpochRecord rec{"finetune", epoch, total / static_cast<double>(train.size()),
                        evaluate_loss(model, val, raw_val), false};
        const auto decision = early_stop_update(stop, rec.val_loss);
        rec.improved = stop.best_epoch == epoch;
        if (rec.improved) best = snapshot(params);
        result.history.push_back(rec);
        if (spec.progress) spec.progress(rec);
        if (!stop.diagnostic.empty()) throw TrainingError("finetune: " + stop.diagnostic);
        if (spec.early_stop && decision == StopDecision::stop) break;
        if (spec.stop_below_train_loss && rec.train_loss < *spec.stop_below_train_loss) break;
    }
    if (stop.best_epoch > 0) {
        restore(params, best);
        result.best_val_loss = stop.best_val_loss;
    }
    result.best_epoch = stop.best_epoch;

    if (data.test_access_count() != test_reads_before) {
        throw TrainingError("test split was read before checkpoint selection");
    }
    result.test_metrics = evaluate(model, data, spec.seed);

    nlohmann::ordered_json meta;
    meta["phase"] = "finetune";
    meta["seed"] = spec.seed;
    meta["mode"] = to_string(spec.mode);
    meta["best_epoch"] = result.best_epoch;
    meta["best_val_loss"] = result.best_val_loss;
    meta["epochs_run"] = result.history.size();
    meta["schema"] = schema_to_json(schema);
    meta["test_metrics"] = result.test_metrics.to_json();
    result.checkpoint = model_checkpoint(model, std::move(meta));
    result.model = std::move(model);
    return result;
}

// ---- evaluation -----------------------------------------------------------

MetricReport evaluate(const AutoMixerModel& model, const PreparedDataset& data, std::uint64_t seed) {
    const auto& schema = data.schema();
    const auto& test = data.test_windows();
    const auto& raw_test = data.raw_test_windows();
    MetricReport r;
    r.task = to_string(model.config().task);
    r.windows = test.size();
    r.seed = seed;
    r.config_hash = model.config().hash();
    for (const auto& c : schema.channels()) r.channel_names.push_back(c.name);
    const auto all = iota_indices(test.size());

    if (model.config().task == Task::event_classify) {
        LabelMatrix predicted;
        {
            NoGradGuard guard;
            const ForwardContext eval{false, nullptr};
            for_each_batch(all, 64, [&](std::span<const std::size_t> idx) {
                auto part = threshold_labels(model.classify(test.batch_x(idx), eval));
                predicted.insert(predicted.end(), part.begin(), part.end());
            });
        }
        const Tensor truth_t = window_labels(raw_test, schema, all);
        const auto e = truth_t.dim(1);
        LabelMatrix truth(test.size(), std::vector<int>(e));
        for (std::size_t i = 0; i < test.size(); ++i)
            for (std::size_t j = 0; j < e; ++j) truth[i][j] = truth_t.at(i * e + j) > 0.5 ? 1 : 0;
        r.subset_accuracy = subset_accuracy(predicted, truth);
        r.baseline_accuracy = subset_accuracy(LabelMatrix(test.size(), std::vector<int>(e, 0)), truth);
        return r;
    }

    const Tensor pred = predict_forecasts(model, test);
    const Tensor actual = test.batch_y(all);
    fill_forecast_metrics(r, pred, actual, schema);
    const auto kpis = schema.kpi_indices();
    const auto events = schema.event_indices();
    const auto& mask = model.config().task == Task::event_forecast ? events : kpis;
    if (!mask.empty()) r.baseline_mse = mse_masked(baseline_persistence(test.batch_x(all), test.fl()), actual, mask);
    return r;
}

MetricReport evaluate_persistence(const PreparedDataset& data, Task task) {
    if (task == Task::event_classify) throw ConfigError("persistence applies to forecasting tasks only");
    const auto& schema = data.schema();
    const auto& test = data.test_windows();
    const auto all = iota_indices(test.size());
    const Tensor pred = baseline_persistence(test.batch_x(all), test.fl());
    const Tensor actual = test.batch_y(all);
    MetricReport r;
    r.task = to_string(task);
    r.windows = test.size();
    for (const auto& c : schema.channels()) r.channel_names.push_back(c.name);
    fill_forecast_metrics(r, pred, actual, schema);
    r.baseline_mse = task == Task::event_forecast ? r.event_mse : r.kpi_mse;
    return r;
}

}  // namespace automixer
