#include "automixer/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "automixer/errors.hpp"

namespace automixer {

namespace {

std::string fmt(const std::optional<double>& v, const char* spec = "%.4f") {
    if (!v) return "-";
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, *v);
    return buf;
}

const char* marker_text(Marker m) { return m == Marker::best ? "*" : m == Marker::second ? "+" : ""; }
const char* marker_json(Marker m) { return m == Marker::best ? "best" : m == Marker::second ? "second" : "none"; }

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

// Marks best and second best rows of one column.
template <class Get, class Set>
void mark(std::vector<BenchRow>& rows, bool lower_is_better, Get get, Set set) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (get(rows[i])) idx.push_back(i);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return lower_is_better ? *get(rows[a]) < *get(rows[b]) : *get(rows[a]) > *get(rows[b]);
    });
    if (!idx.empty()) set(rows[idx[0]], Marker::best);
    if (idx.size() > 1) set(rows[idx[1]], Marker::second);
}

std::optional<double> median_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    return median(v);
}

TrainSpec with_seed(TrainSpec spec, std::uint64_t seed) {
    spec.seed = seed;
    return spec;
}

}  // namespace

AutoMixerConfig Variant::apply(AutoMixerConfig base) const {
    base.compress = compress;
    base.cell = cell;
    base.cc = cc;
    return base;
}

std::vector<Variant> default_variants() {
    return {
        {"AutoMixer GRU", false, true, CellKind::gru, false},
        {"AutoMixer GRU CC", false, true, CellKind::gru, true},
        {"AutoMixer LSTM", false, true, CellKind::lstm, false},
        {"AutoMixer LSTM CC", false, true, CellKind::lstm, true},
        {"TSMixer", false, false, CellKind::gru, false},
        {"TSMixer CC", false, false, CellKind::gru, true},
        {"Persistence", true, false, CellKind::gru, false},
    };
}

Variant variant_by_name(const std::string& name) {
    for (const auto& v : default_variants())
        if (v.name == name) return v;
    std::string known;
    for (const auto& v : default_variants()) known += (known.empty() ? "" : ", ") + v.name;
    throw ConfigError("unknown variant '" + name + "' (known: " + known + ")");
}

std::optional<double> task_mse(const MetricReport& r) {
    return r.task == to_string(Task::event_forecast) ? r.event_mse : r.kpi_mse;
}

std::optional<double> task_pcc(const MetricReport& r) {
    return r.task == to_string(Task::event_forecast) ? r.event_pcc : r.kpi_pcc;
}

double median(std::vector<double> values) {
    if (values.empty()) throw UsageError("median of an empty set");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

nlohmann::ordered_json BenchCell::to_json() const {
    return {{"record", "cell"}, {"variant", variant}, {"seed", seed},   {"ok", ok},
            {"error", error},   {"mse", opt_json(mse)}, {"pcc", opt_json(pcc)},
            {"accuracy", opt_json(accuracy)}, {"val_loss", opt_json(val_loss)}};
}

const BenchRow* BenchTable::row(const std::string& variant) const {
    for (const auto& r : rows)
        if (r.variant == variant) return &r;
    return nullptr;
}

void assemble_rows(BenchTable& table) {
    table.rows.clear();
    std::map<std::string, std::size_t> index;
    std::vector<std::vector<double>> mse, pcc, acc;
    for (const auto& c : table.cells) {
        auto [it, inserted] = index.try_emplace(c.variant, table.rows.size());
        if (inserted) {
            BenchRow row;
            row.variant = c.variant;
            table.rows.push_back(row);
            mse.emplace_back();
            pcc.emplace_back();
            acc.emplace_back();
        }
        const auto i = it->second;
        if (!c.ok) {
            ++table.rows[i].failed;
            continue;
        }
        if (c.mse) mse[i].push_back(*c.mse);
        if (c.pcc) pcc[i].push_back(*c.pcc);
        if (c.accuracy) acc[i].push_back(*c.accuracy);
    }
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        table.rows[i].mse = median_of(mse[i]);
        table.rows[i].pcc = median_of(pcc[i]);
        table.rows[i].accuracy = median_of(acc[i]);
    }
    mark(table.rows, true, [](const BenchRow& r) { return r.mse; }, [](BenchRow& r, Marker m) { r.mse_marker = m; });
    mark(table.rows, false, [](const BenchRow& r) { return r.pcc; }, [](BenchRow& r, Marker m) { r.pcc_marker = m; });
    mark(table.rows, false, [](const BenchRow& r) { return r.accuracy; },
         [](BenchRow& r, Marker m) { r.accuracy_marker = m; });
}

std::string BenchTable::to_text() const {
    std::size_t width = 8;
    for (const auto& r : rows) width = std::max(width, r.variant.size() + 2);
    const bool classify = task == to_string(Task::event_classify);
    std::ostringstream os;
    os << "task: " << task << "  (median over seeds; * best, + second best)\n";
    os << pad("variant", width) << (classify ? pad("Acc", 12) : pad("MSE", 12) + pad("PCC", 12)) << "failed\n";
    for (const auto& r : rows) {
        os << pad(r.variant, width);
        if (classify) {
            os << pad(fmt(r.accuracy) + marker_text(r.accuracy_marker), 12);
        } else {
            os << pad(fmt(r.mse) + marker_text(r.mse_marker), 12) << pad(fmt(r.pcc) + marker_text(r.pcc_marker), 12);
        }
        os << r.failed << '\n';
    }
    return os.str();
}

std::string BenchTable::to_jsonl() const {
    std::ostringstream os;
    for (const auto& c : cells) os << c.to_json().dump() << '\n';
    for (const auto& r : rows) {
        nlohmann::ordered_json j{{"record", "row"},
                                 {"task", task},
                                 {"variant", r.variant},
                                 {"mse", opt_json(r.mse)},
                                 {"mse_marker", marker_json(r.mse_marker)},
                                 {"pcc", opt_json(r.pcc)},
                                 {"pcc_marker", marker_json(r.pcc_marker)},
                                 {"accuracy", opt_json(r.accuracy)},
                                 {"accuracy_marker", marker_json(r.accuracy_marker)},
                                 {"failed", r.failed}};
        os << j.dump() << '\n';
    }
    return os.str();
}

BenchTable run_benchmark(const PreparedDataset& data, const std::vector<Variant>& variants, const HarnessSpec& spec) {
    if (spec.seeds.empty()) throw ConfigError("benchmark needs at least one seed");
    if (variants.empty()) throw ConfigError("benchmark needs at least one variant");
    BenchTable table;
    table.task = to_string(spec.config.task);
    const bool pt = spec.finetune.mode == TrainMode::pretrained;
    for (auto seed : spec.seeds) {
        // one pretrained autoencoder per cell kind, shared by the CC and plain variants
        std::map<CellKind, ChannelAutoEncoder> pretrained;
        for (const auto& v : variants) {
            BenchCell cell;
            cell.variant = v.name;
            cell.seed = seed;
            try {
                if (v.persistence) {
                    const auto r = evaluate_persistence(data, spec.config.task);
                    cell.mse = task_mse(r);
                    cell.pcc = task_pcc(r);
                } else {
                    const auto config = v.apply(spec.config);
                    const ChannelAutoEncoder* ae = nullptr;
                    auto ft = with_seed(spec.finetune, seed);
                    if (!config.compress) ft.mode = TrainMode::no_pretrain;
                    if (config.compress && pt) {
                        auto it = pretrained.find(v.cell);
                        if (it == pretrained.end()) {
                            it = pretrained.emplace(v.cell, pretrain(data, config, with_seed(spec.pretrain, seed)).autoencoder).first;
                        }
                        ae = &it->second;
                    }
                    const auto result = finetune(data, config, ft, ae);
                    cell.val_loss = result.best_val_loss;
                    if (config.task == Task::event_classify) {
                        cell.accuracy = result.test_metrics.subset_accuracy;
                    } else {
                        cell.mse = task_mse(result.test_metrics);
                        cell.pcc = task_pcc(result.test_metrics);
                    }
                }
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.ok = false;
                cell.error = e.what();
            }
            table.cells.push_back(cell);
            if (spec.on_cell) spec.on_cell(cell);
        }
    }
    assemble_rows(table);
    return table;
}

// ---- compression sweep ----------------------------------------------------

std::string SweepTable::to_text() const {
    std::ostringstream os;
    os << "variant: " << variant << "  ('-' marks an infeasible ratio)\n";
    os << pad("cr", 8) << pad("C'", 6) << pad("val_mse", 12) << "test_mse\n";
    for (const auto& e : entries) {
        os << pad(fmt(e.cr, "%.2f"), 8) << pad(e.feasible ? std::to_string(e.compressed) : "-", 6)
           << pad(e.feasible ? fmt(e.val_mse) : "-", 12) << (e.feasible ? fmt(e.test_mse) : "-") << '\n';
    }
    os << "selected cr: " << fmt(selected_cr, "%.2f") << '\n';
    return os.str();
}

std::string SweepTable::to_jsonl() const {
    std::ostringstream os;
    for (const auto& e : entries) {
        nlohmann::ordered_json j{{"record", "sweep"},          {"variant", variant},
                                 {"cr", e.cr},                 {"feasible", e.feasible},
                                 {"compressed", e.feasible ? nlohmann::ordered_json(e.compressed) : nlohmann::ordered_json(nullptr)},
                                 {"val_mse", opt_json(e.val_mse)}, {"test_mse", opt_json(e.test_mse)},
                                 {"error", e.error}};
        os << j.dump() << '\n';
    }
    os << nlohmann::ordered_json{{"record", "selection"}, {"variant", variant}, {"selected_cr", opt_json(selected_cr)}}.dump()
       << '\n';
    return os.str();
}

SweepTable sweep_cr(const PreparedDataset& data, const std::vector<double>& cr_list, const Variant& variant,
                    const HarnessSpec& spec) {
    if (!variant.compress || variant.persistence) {
        throw ConfigError("cr sweep needs a compressing variant, got '" + variant.name + "'");
    }
    if (cr_list.empty()) throw ConfigError("cr sweep needs at least one ratio");
    if (spec.seeds.empty()) throw ConfigError("cr sweep needs at least one seed");
    SweepTable table;
    table.variant = variant.name;
    std::size_t feasible = 0;
    for (double cr : cr_list) {
        SweepEntry entry;
        entry.cr = cr;
        try {
            entry.compressed = compressed_channels(data.schema().size(), cr);
            entry.feasible = true;
            ++feasible;
        } catch (const ConfigError& e) {
            entry.error = e.what();
            table.entries.push_back(entry);
            continue;
        }
        auto config = variant.apply(spec.config);
        config.cr = cr;
        std::vector<double> val, test;
        for (auto seed : spec.seeds) {
            try {
                auto ft = with_seed(spec.finetune, seed);
                std::optional<ChannelAutoEncoder> ae;
                if (ft.mode == TrainMode::pretrained) ae = pretrain(data, config, with_seed(spec.pretrain, seed)).autoencoder;
                const auto result = finetune(data, config, ft, ae ? &*ae : nullptr);
                val.push_back(result.best_val_loss);
                if (auto m = task_mse(result.test_metrics)) test.push_back(*m);
            } catch (const std::exception& e) {
                entry.error = e.what();
            }
        }
        entry.val_mse = median_of(val);
        entry.test_mse = median_of(test);
        table.entries.push_back(entry);
    }
    if (feasible == 0) {
        throw ConfigError("every compression ratio is infeasible for " + std::to_string(data.schema().size()) +
                          " channels");
    }
    const SweepEntry* best = nullptr;
    for (const auto& e : table.entries)
        if (e.val_mse && (!best || *e.val_mse < *best->val_mse)) best = &e;
    if (best) table.selected_cr = best->cr;
    return table;
}

// ---- pretraining ablation ---------------------------------------------------

std::string AblationTable::to_text() const {
    std::ostringstream os;
    os << "variant: " << variant << "  (paired PT/NPT runs, same seed per pair)\n";
    os << pad("seed", 8) << pad("PT_mse", 12) << "NPT_mse\n";
    for (const auto& p : pairs) {
        os << pad(std::to_string(p.seed), 8) << pad(fmt(p.pt_mse), 12) << fmt(p.npt_mse);
        if (!p.error.empty()) os << "  (failed: " << p.error << ')';
        os << '\n';
    }
    os << pad("median", 8) << pad(fmt(median_pt), 12) << fmt(median_npt) << '\n';
    os << "improvement: " << fmt(improvement_pct, "%.2f") << "%\n";
    return os.str();
}

std::string AblationTable::to_jsonl() const {
    std::ostringstream os;
    for (const auto& p : pairs) {
        os << nlohmann::ordered_json{{"record", "pair"},       {"variant", variant},
                                     {"seed", p.seed},          {"pt_mse", opt_json(p.pt_mse)},
                                     {"npt_mse", opt_json(p.npt_mse)}, {"error", p.error}}
                  .dump()
           << '\n';
    }
    os << nlohmann::ordered_json{{"record", "summary"},
                                 {"variant", variant},
                                 {"median_pt_mse", opt_json(median_pt)},
                                 {"median_npt_mse", opt_json(median_npt)},
                                 {"improvement_pct", opt_json(improvement_pct)}}
              .dump()
       << '\n';
    return os.str();
}

AblationTable ablate_pretraining(const PreparedDataset& data, const Variant& variant, const HarnessSpec& spec) {
    if (!variant.compress || variant.persistence) {
        throw ConfigError("pretraining ablation needs a compressing variant, got '" + variant.name + "'");
    }
    if (spec.seeds.empty()) throw ConfigError("ablation needs at least one seed");
    AblationTable table;
    table.variant = variant.name;
    const auto config = variant.apply(spec.config);
    std::vector<double> pt, npt;
    for (auto seed : spec.seeds) {
        AblationPair pair;
        pair.seed = seed;
        try {
            const auto ae = pretrain(data, config, with_seed(spec.pretrain, seed)).autoencoder;
            auto ft = with_seed(spec.finetune, seed);
            ft.mode = TrainMode::pretrained;
            pair.pt_mse = task_mse(finetune(data, config, ft, &ae).test_metrics);
            ft.mode = TrainMode::no_pretrain;
            pair.npt_mse = task_mse(finetune(data, config, ft).test_metrics);
        } catch (const std::exception& e) {
            pair.error = e.what();
        }
        if (pair.pt_mse && pair.npt_mse) {
            pt.push_back(*pair.pt_mse);
            npt.push_back(*pair.npt_mse);
        }
        table.pairs.push_back(pair);
    }
    table.median_pt = median_of(pt);
    table.median_npt = median_of(npt);
    if (table.median_pt && table.median_npt && *table.median_npt != 0.0) {
        table.improvement_pct = (*table.median_npt - *table.median_pt) / *table.median_npt * 100.0;
    }
    return table;
}

}  // namespace automixer
