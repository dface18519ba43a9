#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <string>

#include "lidadv/error.hpp"
#include "lidadv/harness.hpp"
#include "text_util.hpp"

namespace lidadv {

namespace {

constexpr const char* kHeader =
    "protocol,attack,rule,kappa,auc,detection_rate,tpr_at_5fpr,"
    "post_detection_classification_rate,classification_rate_wo_detection,n,dropped_degenerate";

std::string percent(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", rate * 100.0);
  return buf;
}

double parse_percent(const std::string& cell) {
  const double v = parse_double(cell) / 100.0;
  if (!(v >= 0.0 && v <= 1.0)) throw ParseError("report: rate outside [0,100]");
  return v;
}

}  // namespace

std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::oblivious: return "oblivious";
    case Protocol::ensemble: return "ensemble";
    case Protocol::transfer: return "transfer";
  }
  return "?";
}

Protocol parse_protocol(std::string_view s) {
  if (s == "oblivious") return Protocol::oblivious;
  if (s == "ensemble") return Protocol::ensemble;
  if (s == "transfer") return Protocol::transfer;
  throw ParseError("unknown protocol '" + std::string(s) + "'");
}

std::string format_kappa(double kappa) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", kappa);
  return buf;
}

void emit_report(std::span<const ReportRow> rows, std::ostream& out) {
  if (rows.empty()) throw InvalidInputError("emit_report: no rows");
  out << kHeader << '\n';
  for (const auto& r : rows) {
    out << to_string(r.protocol) << ',' << to_string(r.attack) << ','
        << (r.rule ? to_string(*r.rule) : "") << ',' << format_kappa(r.kappa) << ','
        << percent(r.auc) << ',' << percent(r.detection_rate) << ',' << percent(r.tpr_at_5fpr) << ','
        << (r.post_detection_classification_rate ? percent(*r.post_detection_classification_rate) : "")
        << ','
        << (r.classification_rate_wo_detection ? percent(*r.classification_rate_wo_detection) : "")
        << ',' << r.n << ',' << r.dropped_degenerate << '\n';
  }
  if (!out) throw IoError("failed writing report");
}

void emit_report(std::span<const ReportRow> rows, const std::filesystem::path& path) {
  if (rows.empty()) throw InvalidInputError("emit_report: no rows");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  emit_report(rows, out);
}

std::vector<ReportRow> parse_report(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kHeader) throw ParseError("report: bad header");
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 11) throw ParseError("report: expected 11 columns");
    ReportRow r;
    r.protocol = parse_protocol(c[0]);
    try {
      r.attack = parse_attack_method(c[1]);
      if (!c[2].empty()) r.rule = parse_decision_rule(c[2]);
    } catch (const InvalidInputError& e) {
      throw ParseError(e.what());
    }
    r.kappa = parse_double(c[3]);
    r.auc = parse_percent(c[4]);
    r.detection_rate = parse_percent(c[5]);
    r.tpr_at_5fpr = parse_percent(c[6]);
    if (!c[7].empty()) r.post_detection_classification_rate = parse_percent(c[7]);
    if (!c[8].empty()) r.classification_rate_wo_detection = parse_percent(c[8]);
    r.n = static_cast<std::size_t>(parse_uint(c[9]));
    r.dropped_degenerate = static_cast<std::size_t>(parse_uint(c[10]));
    rows.push_back(r);
  }
  return rows;
}

std::vector<ReportRow> parse_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_report(in);
}

void print_report_table(std::span<const ReportRow> rows, std::ostream& out) {
  out << std::left << std::setw(10) << "protocol" << std::setw(10) << "attack" << std::setw(6) << "k"
      << std::right << std::setw(8) << "AUC" << std::setw(10) << "detect" << std::setw(10) << "tpr@5%"
      << std::setw(12) << "post-det" << std::setw(10) << "w/o det" << std::setw(7) << "n" << '\n';
  for (const auto& r : rows) {
    std::string attack(to_string(r.attack));
    if (r.rule) attack += "/" + std::string(to_string(*r.rule));
    out << std::left << std::setw(10) << to_string(r.protocol) << std::setw(10) << attack
        << std::setw(6) << format_kappa(r.kappa) << std::right << std::setw(8) << percent(r.auc)
        << std::setw(10) << percent(r.detection_rate) << std::setw(10) << percent(r.tpr_at_5fpr)
        << std::setw(12)
        << (r.post_detection_classification_rate ? percent(*r.post_detection_classification_rate) : "-")
        << std::setw(10)
        << (r.classification_rate_wo_detection ? percent(*r.classification_rate_wo_detection) : "-")
        << std::setw(7) << r.n << '\n';
  }
}

}  // namespace lidadv
