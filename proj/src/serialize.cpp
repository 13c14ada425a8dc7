#include "advml/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace advml {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// Rates rendered in JSON as 6-decimal values.
double round6(double v) { return std::round(v * 1e6) / 1e6; }

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << text;
    if (!out) throw IoError(path.string() + ": write failed");
}

} // namespace

std::string history_csv(const History& history) {
    const bool robust =
        !history.epochs.empty() && history.epochs.front().robust_val_acc.has_value();
    std::ostringstream os;
    os << "epoch,train_loss,train_acc,val_loss,val_acc";
    if (robust) os << ",robust_val_acc";
    os << "\n";
    for (std::size_t i = 0; i < history.epochs.size(); ++i) {
        const EpochStats& e = history.epochs[i];
        os << (i + 1) << "," << fixed6(e.train_loss) << "," << fixed6(e.train_acc) << ","
           << fixed6(e.val_loss) << "," << fixed6(e.val_acc);
        if (robust) os << "," << fixed6(e.robust_val_acc.value_or(0.0));
        os << "\n";
    }
    return os.str();
}

void write_history_csv(const std::filesystem::path& path, const History& history) {
    write_text(path, history_csv(history));
}

std::string report_json(const ClassReport& report, std::optional<double> robust_accuracy) {
    ordered_json j;
    j["accuracy"] = round6(report.accuracy);
    j["accuracy_percent"] = round_percent(report.accuracy);
    if (robust_accuracy) {
        j["robust_accuracy"] = round6(*robust_accuracy);
        j["robust_accuracy_percent"] = round_percent(*robust_accuracy);
    }
    ordered_json classes = ordered_json::object();
    for (std::size_t c = 0; c < report.class_names.size(); ++c) {
        const ClassMetrics& m = report.per_class[c];
        ordered_json jc;
        jc["precision"] = round6(m.precision);
        jc["recall"] = round6(m.recall);
        jc["f1"] = round6(m.f1);
        jc["support"] = m.support;
        jc["percent"] = {{"precision", round_percent(m.precision)},
                         {"recall", round_percent(m.recall)},
                         {"f1", round_percent(m.f1)}};
        classes[report.class_names[c]] = std::move(jc);
    }
    j["classes"] = std::move(classes);
    j["zero_division_flags"] = report.zero_division_flags;
    return j.dump(2) + "\n";
}

void write_report_json(const std::filesystem::path& path, const ClassReport& report,
                       std::optional<double> robust_accuracy) {
    write_text(path, report_json(report, robust_accuracy));
}

ClassReport read_report_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open report");
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw IoError(path.string() + ": invalid JSON (" + e.what() + ")");
    }
    ClassReport r;
    try {
        r.accuracy = j.at("accuracy").get<double>();
        for (const auto& [name, jc] : j.at("classes").items()) {
            r.class_names.push_back(name);
            ClassMetrics m;
            m.precision = jc.at("precision").get<double>();
            m.recall = jc.at("recall").get<double>();
            m.f1 = jc.at("f1").get<double>();
            m.support = jc.at("support").get<std::size_t>();
            r.per_class.push_back(m);
        }
        if (j.contains("zero_division_flags"))
            r.zero_division_flags = j.at("zero_division_flags").get<std::vector<std::string>>();
    } catch (const std::exception& e) {
        throw IoError(path.string() + ": unexpected report structure (" + e.what() + ")");
    }
    return r;
}

std::string confusion_csv(const ConfusionMatrix& m) {
    std::ostringstream os;
    os << "actual\\predicted";
    for (const std::string& name : m.class_names) os << "," << name;
    os << "\n";
    for (std::size_t r = 0; r < m.counts.size(); ++r) {
        os << m.class_names[r];
        for (std::size_t c = 0; c < m.counts[r].size(); ++c) os << "," << m.counts[r][c];
        os << "\n";
    }
    return os.str();
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& m) {
    write_text(path, confusion_csv(m));
}

std::string comparison_json(const ReportComparison& cmp) {
    ordered_json j;
    j["accuracy_before"] = round6(cmp.accuracy_before);
    j["accuracy_after"] = round6(cmp.accuracy_after);
    j["accuracy_delta"] = round6(cmp.accuracy_delta);
    ordered_json classes = ordered_json::object();
    for (std::size_t c = 0; c < cmp.class_names.size(); ++c) {
        const ClassMetricsDelta& d = cmp.per_class_delta[c];
        classes[cmp.class_names[c]] = {{"precision_delta", round6(d.precision)},
                                       {"recall_delta", round6(d.recall)},
                                       {"f1_delta", round6(d.f1)}};
    }
    j["classes"] = std::move(classes);
    return j.dump(2) + "\n";
}

void write_comparison_json(const std::filesystem::path& path, const ReportComparison& cmp) {
    write_text(path, comparison_json(cmp));
}

} // namespace advml
