#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "advml/eval.hpp"
#include "advml/optim.hpp"

namespace advml {

// history.csv: header epoch,train_loss,train_acc,val_loss,val_acc and one
// 6-decimal fixed-point row per epoch. Rows gain a robust_val_acc column
// when the history carries robust accuracies (adversarial training).
std::string history_csv(const History& history);
void write_history_csv(const std::filesystem::path& path, const History& history);

// Report JSON: accuracy, per-class precision/recall/f1/support with their
// rounded percent forms, and zero_division_flags. Raw rates are written
// rounded to 6 decimals. An optional robust accuracy is included when given.
std::string report_json(const ClassReport& report,
                        std::optional<double> robust_accuracy = std::nullopt);
void write_report_json(const std::filesystem::path& path, const ClassReport& report,
                       std::optional<double> robust_accuracy = std::nullopt);
ClassReport read_report_json(const std::filesystem::path& path);

// Confusion CSV with a class-name header row and column.
std::string confusion_csv(const ConfusionMatrix& m);
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& m);

std::string comparison_json(const ReportComparison& cmp);
void write_comparison_json(const std::filesystem::path& path, const ReportComparison& cmp);

} // namespace advml
