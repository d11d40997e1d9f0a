#include "fbgrpo/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace fbgrpo::report {

using nlohmann::json;

GroupOutcome outcome_from_log(const json& group_log) {
  GroupOutcome g;
  g.epoch = group_log.at("epoch").get<int>();
  g.scenario_id = group_log.at("scenario_id").get<std::string>();
  const json& on = group_log.at("onpolicy");
  g.r_traj = on.at("r_traj").get<std::vector<double>>();
  g.nc = on.at("nc").get<std::vector<double>>();
  g.dac = on.at("dac").get<std::vector<double>>();
  return g;
}

bool total_failure_pdms(const GroupOutcome& g, double s) {
  return !g.r_traj.empty() && std::all_of(g.r_traj.begin(), g.r_traj.end(), [s](double r) { return r < s; });
}

bool total_failure_nc(const GroupOutcome& g) {
  return !g.nc.empty() && std::all_of(g.nc.begin(), g.nc.end(), [](double v) { return v == 0.0; });
}

bool total_failure_dac(const GroupOutcome& g) {
  return !g.dac.empty() && std::all_of(g.dac.begin(), g.dac.end(), [](double v) { return v == 0.0; });
}

std::vector<EpochFailures> failure_ratios(const std::vector<GroupOutcome>& logs, double s) {
  if (logs.empty()) {
    EpochFailures e;
    e.warning = true;
    return {e};
  }
  std::map<int, EpochFailures> by_epoch;
  for (const GroupOutcome& g : logs) {
    EpochFailures& e = by_epoch[g.epoch];
    e.epoch = g.epoch;
    ++e.scenarios;
    e.pdms += total_failure_pdms(g, s);
    e.nc += total_failure_nc(g);
    e.dac += total_failure_dac(g);
  }
  std::vector<EpochFailures> out;
  for (auto& [epoch, e] : by_epoch) {
    const double n = static_cast<double>(e.scenarios);
    e.pdms /= n;
    e.nc /= n;
    e.dac /= n;
    out.push_back(e);
  }
  return out;
}

namespace {

struct Column {
  const char* name;
  double (*get)(const AblationRow&);
};

const std::vector<Column>& columns() {
  static const std::vector<Column> cols = {
      {"nc", [](const AblationRow& r) { return r.means.nc; }},
      {"dac", [](const AblationRow& r) { return r.means.dac; }},
      {"ttc", [](const AblationRow& r) { return r.means.ttc; }},
      {"comfort", [](const AblationRow& r) { return r.means.comfort; }},
      {"ep", [](const AblationRow& r) { return r.means.ep; }},
      {"pdms", [](const AblationRow& r) { return r.means.pdms; }},
      {"ddc", [](const AblationRow& r) { return r.means.ddc; }},
      {"tlc", [](const AblationRow& r) { return r.means.tlc; }},
      {"lk", [](const AblationRow& r) { return r.means.lk; }},
      {"hc", [](const AblationRow& r) { return r.means.hc; }},
      {"ec", [](const AblationRow& r) { return r.means.ec; }},
      {"epdms", [](const AblationRow& r) { return r.means.epdms; }},
      {"speed_acc", [](const AblationRow& r) { return r.accuracy.speed; }},
      {"path_acc", [](const AblationRow& r) { return r.accuracy.path; }},
      {"accuracy", [](const AblationRow& r) { return r.accuracy.overall; }},
  };
  return cols;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string AblationTable::csv() const {
  std::ostringstream out;
  out << "mode";
  for (const Column& c : columns()) out << ',' << c.name;
  out << '\n';
  for (const AblationRow& r : rows) {
    out << r.mode;
    for (const Column& c : columns()) out << ',' << fixed(c.get(r), 6);
    out << '\n';
  }
  return out.str();
}

std::string AblationTable::text() const {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"mode"};
  for (const Column& c : columns()) header.emplace_back(c.name);
  cells.push_back(header);
  for (const AblationRow& r : rows) {
    std::vector<std::string> line{r.mode};
    for (const Column& c : columns()) line.push_back(fixed(c.get(r), 4));
    cells.push_back(line);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::ostringstream out;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i == 0) {
        out << line[i] << std::string(width[i] - line[i].size(), ' ');
      } else {
        out << "  " << std::string(width[i] - line[i].size(), ' ') << line[i];
      }
    }
    out << '\n';
  }
  return out.str();
}

AblationTable ablation_report(const std::vector<std::pair<std::string, evaluate::EvalReport>>& reports) {
  if (reports.empty()) throw std::invalid_argument("ablation report needs at least one evaluation report");
  AblationTable t;
  t.corpus_hash = reports.front().second.corpus_hash;
  for (const auto& [mode, rep] : reports) {
    if (rep.corpus_hash != t.corpus_hash) {
      throw std::invalid_argument("evaluation reports come from different corpora (" + t.corpus_hash + " vs " +
                                  rep.corpus_hash + ")");
    }
    t.rows.push_back({mode, rep.means, rep.accuracy});
  }
  return t;
}

}  // namespace fbgrpo::report
