#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "advml/data.hpp"
#include "advml/nn.hpp"

namespace advml {

// counts[actual][predicted]; this orientation is what makes precision read
// down a column and recall across a row.
struct ConfusionMatrix {
    std::vector<std::vector<std::size_t>> counts;
    std::vector<std::string> class_names;

    std::size_t total() const {
        std::size_t t = 0;
        for (const auto& row : counts)
            for (std::size_t v : row) t += v;
        return t;
    }
};

template <typename Scalar>
ConfusionMatrix confusion(const Model<Scalar>& model, const Dataset<Scalar>& dataset,
                          std::size_t batch_size = 64) {
    const std::size_t k = dataset.class_names.size();
    if (model.num_classes() != k)
        throw ConfigError("confusion: model has " + std::to_string(model.num_classes()) +
                          " classes, dataset has " + std::to_string(k));
    if (dataset.size() == 0) throw ConfigError("confusion: empty dataset");
    ConfusionMatrix m;
    m.class_names = dataset.class_names;
    m.counts.assign(k, std::vector<std::size_t>(k, 0));
    for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, dataset.size());
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        auto [batch, labels] = make_batch(dataset, idx);
        const std::vector<std::size_t> preds = argmax(predict(model, batch), 1);
        for (std::size_t i = 0; i < preds.size(); ++i) ++m.counts[labels[i]][preds[i]];
    }
    return m;
}

// trace / total.
inline double accuracy(const ConfusionMatrix& m) {
    const std::size_t total = m.total();
    if (total == 0) throw ConfigError("accuracy: empty confusion matrix");
    std::size_t diag = 0;
    for (std::size_t i = 0; i < m.counts.size(); ++i) diag += m.counts[i][i];
    return double(diag) / double(total);
}

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct ClassReport {
    std::vector<std::string> class_names;
    std::vector<ClassMetrics> per_class;
    double accuracy = 0.0;
    std::vector<std::string> zero_division_flags; // "<class>.<metric>" entries
};

// Display convention used alongside raw rates: round-half-up of 100*rate.
inline int round_percent(double rate) { return int(std::floor(100.0 * rate + 0.5)); }

inline ClassReport report(const ConfusionMatrix& m) {
    const std::size_t k = m.counts.size();
    if (k == 0 || m.total() == 0) throw ConfigError("report: empty confusion matrix");
    ClassReport r;
    r.class_names = m.class_names;
    r.per_class.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t col_sum = 0, row_sum = 0;
        for (std::size_t i = 0; i < k; ++i) {
            col_sum += m.counts[i][c];
            row_sum += m.counts[c][i];
        }
        ClassMetrics& cm = r.per_class[c];
        cm.support = row_sum;
        const double tp = double(m.counts[c][c]);
        if (col_sum == 0)
            r.zero_division_flags.push_back(m.class_names[c] + ".precision");
        else
            cm.precision = tp / double(col_sum);
        if (row_sum == 0)
            r.zero_division_flags.push_back(m.class_names[c] + ".recall");
        else
            cm.recall = tp / double(row_sum);
        if (cm.precision + cm.recall == 0.0)
            r.zero_division_flags.push_back(m.class_names[c] + ".f1");
        else
            cm.f1 = 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall);
    }
    r.accuracy = accuracy(m);
    return r;
}

struct ClassMetricsDelta {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct ReportComparison {
    std::vector<std::string> class_names;
    double accuracy_before = 0.0;
    double accuracy_after = 0.0;
    double accuracy_delta = 0.0; // after - before
    std::vector<ClassMetricsDelta> per_class_delta;
};

inline ReportComparison compare_reports(const ClassReport& before, const ClassReport& after) {
    if (before.class_names != after.class_names)
        throw ConfigError("compare_reports: class sets differ");
    ReportComparison cmp;
    cmp.class_names = before.class_names;
    cmp.accuracy_before = before.accuracy;
    cmp.accuracy_after = after.accuracy;
    cmp.accuracy_delta = after.accuracy - before.accuracy;
    cmp.per_class_delta.resize(before.per_class.size());
    for (std::size_t c = 0; c < before.per_class.size(); ++c) {
        cmp.per_class_delta[c].precision = after.per_class[c].precision - before.per_class[c].precision;
        cmp.per_class_delta[c].recall = after.per_class[c].recall - before.per_class[c].recall;
        cmp.per_class_delta[c].f1 = after.per_class[c].f1 - before.per_class[c].f1;
    }
    return cmp;
}

} // namespace advml
