#include "fbgrpo/evaluate.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "fbgrpo/features.hpp"
#include "fbgrpo/parallel.hpp"
#include "fbgrpo/response.hpp"
#include "fbgrpo/rewards.hpp"
#include "fbgrpo/scenario.hpp"

namespace fbgrpo::evaluate {

using nlohmann::json;

namespace {

ScenarioRow score_row(const ScenarioRecord& rec, const Trajectory* traj, const MetaAction& meta, const EvalConfig& cfg) {
  ScenarioRow row;
  row.scenario_id = rec.scenario_id;
  row.family = rec.family;
  row.predicted_meta = meta;
  row.gt_meta = rec.gt_meta;
  if (traj && rewards::scorable(*traj)) {
    row.well_formed = true;
    row.scores = metrics::sub_scores(rec.scene, *traj, cfg.metrics);
    row.pdms = metrics::pdms(row.scores);
    row.extended = metrics::extended_sub_scores(rec.scene, *traj, std::nullopt, cfg.metrics);
    row.epdms = metrics::epdms(row.extended);
  }
  return row;
}

void finalize(EvalReport& r, const std::vector<ScenarioRecord>& corpus, const EvalConfig& cfg) {
  const double n = static_cast<double>(r.rows.size());
  Means& m = r.means;
  std::vector<MetaAction> pred, gt;
  for (const ScenarioRow& row : r.rows) {
    m.nc += row.scores.nc;
    m.dac += row.scores.dac;
    m.ttc += row.scores.ttc;
    m.comfort += row.scores.comfort;
    m.ep += row.scores.ep;
    m.pdms += row.pdms;
    m.ddc += row.extended.ddc;
    m.tlc += row.extended.tlc;
    m.lk += row.extended.lk;
    m.hc += row.extended.hc;
    m.ec += row.extended.ec;
    m.epdms += row.epdms;
    r.failures.pdms += row.pdms < cfg.s;
    r.failures.nc += row.well_formed && row.scores.nc == 0.0;
    r.failures.dac += row.well_formed && row.scores.dac == 0.0;
    pred.push_back(row.predicted_meta);
    gt.push_back(row.gt_meta);
  }
  for (double* v : {&m.nc, &m.dac, &m.ttc, &m.comfort, &m.ep, &m.pdms, &m.ddc, &m.tlc, &m.lk, &m.hc, &m.ec, &m.epdms}) {
    *v /= n;
  }
  r.failures.pdms /= n;
  r.failures.nc /= n;
  r.failures.dac /= n;
  r.accuracy = metrics::planning_accuracy(pred, gt);
  r.corpus_hash = scenario::corpus_hash(corpus);
}

void require_nonempty(const std::vector<ScenarioRecord>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("evaluation corpus is empty");
}

}  // namespace

EvalReport score_plans(const std::vector<ScenarioRecord>& corpus, const std::vector<std::vector<int>>& plans,
                       const EvalConfig& cfg) {
  require_nonempty(corpus);
  if (plans.size() != corpus.size()) throw std::invalid_argument("one plan per scenario is required");
  EvalReport r;
  r.rows.resize(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    const response::ParsedResponse parsed = response::parse(plans[i]);
    r.rows[i] = score_row(corpus[i], parsed.well_formed_trajectory ? &parsed.trajectory : nullptr, parsed.meta, cfg);
  });
  finalize(r, corpus, cfg);
  return r;
}

EvalReport evaluate(const policy::PolicyParams& params, const std::vector<ScenarioRecord>& corpus,
                    const EvalConfig& cfg) {
  require_nonempty(corpus);
  std::vector<std::vector<int>> plans(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    plans[i] = policy::greedy(params.theta, features::base_features(corpus[i].scene));
  });
  return score_plans(corpus, plans, cfg);
}

EvalReport evaluate_trajectories(const std::vector<ScenarioRecord>& corpus, const std::vector<Trajectory>& trajs,
                                 const std::vector<MetaAction>& metas, const EvalConfig& cfg) {
  require_nonempty(corpus);
  if (trajs.size() != corpus.size() || metas.size() != corpus.size()) {
    throw std::invalid_argument("one trajectory and meta action per scenario is required");
  }
  EvalReport r;
  r.rows.resize(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) { r.rows[i] = score_row(corpus[i], &trajs[i], metas[i], cfg); });
  finalize(r, corpus, cfg);
  return r;
}

json to_json(const EvalReport& r) {
  json rows = json::array();
  for (const ScenarioRow& row : r.rows) {
    rows.push_back({{"scenario_id", row.scenario_id},
                    {"family", std::string(to_string(row.family))},
                    {"well_formed", row.well_formed},
                    {"nc", row.scores.nc},
                    {"dac", row.scores.dac},
                    {"ttc", row.scores.ttc},
                    {"comfort", row.scores.comfort},
                    {"ep", row.scores.ep},
                    {"pdms", row.pdms},
                    {"ddc", row.extended.ddc},
                    {"tlc", row.extended.tlc},
                    {"lk", row.extended.lk},
                    {"hc", row.extended.hc},
                    {"ec", row.extended.ec},
                    {"epdms", row.epdms},
                    {"pred_longitudinal", std::string(to_string(row.predicted_meta.longitudinal))},
                    {"pred_lateral", std::string(to_string(row.predicted_meta.lateral))},
                    {"gt_longitudinal", std::string(to_string(row.gt_meta.longitudinal))},
                    {"gt_lateral", std::string(to_string(row.gt_meta.lateral))}});
  }
  const Means& m = r.means;
  return {{"corpus_hash", r.corpus_hash},
          {"rows", rows},
          {"means",
           {{"nc", m.nc}, {"dac", m.dac}, {"ttc", m.ttc}, {"comfort", m.comfort}, {"ep", m.ep}, {"pdms", m.pdms},
            {"ddc", m.ddc}, {"tlc", m.tlc}, {"lk", m.lk}, {"hc", m.hc}, {"ec", m.ec}, {"epdms", m.epdms}}},
          {"accuracy", {{"speed", r.accuracy.speed}, {"path", r.accuracy.path}, {"overall", r.accuracy.overall}}},
          {"failure_ratios", {{"pdms", r.failures.pdms}, {"nc", r.failures.nc}, {"dac", r.failures.dac}}}};
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.corpus_hash = j.at("corpus_hash").get<std::string>();
  for (const json& row : j.at("rows")) {
    ScenarioRow s;
    s.scenario_id = row.at("scenario_id").get<std::string>();
    s.family = family_from_string(row.at("family").get<std::string>());
    s.well_formed = row.at("well_formed").get<bool>();
    s.scores = {row.at("nc"), row.at("dac"), row.at("ttc"), row.at("comfort"), row.at("ep")};
    s.pdms = row.at("pdms").get<double>();
    s.extended.nc = s.scores.nc;
    s.extended.dac = s.scores.dac;
    s.extended.ep = s.scores.ep;
    s.extended.ttc = s.scores.ttc;
    s.extended.ddc = row.at("ddc").get<double>();
    s.extended.tlc = row.at("tlc").get<double>();
    s.extended.lk = row.at("lk").get<double>();
    s.extended.hc = row.at("hc").get<double>();
    s.extended.ec = row.at("ec").get<double>();
    s.epdms = row.at("epdms").get<double>();
    s.predicted_meta = {longitudinal_from_string(row.at("pred_longitudinal").get<std::string>()),
                        lateral_from_string(row.at("pred_lateral").get<std::string>())};
    s.gt_meta = {longitudinal_from_string(row.at("gt_longitudinal").get<std::string>()),
                 lateral_from_string(row.at("gt_lateral").get<std::string>())};
    r.rows.push_back(s);
  }
  const json& m = j.at("means");
  r.means = {m.at("nc"), m.at("dac"), m.at("ttc"), m.at("comfort"), m.at("ep"), m.at("pdms"),
             m.at("ddc"), m.at("tlc"), m.at("lk"), m.at("hc"), m.at("ec"), m.at("epdms")};
  const json& a = j.at("accuracy");
  r.accuracy = {a.at("speed"), a.at("path"), a.at("overall")};
  const json& f = j.at("failure_ratios");
  r.failures = {f.at("pdms"), f.at("nc"), f.at("dac")};
  return r;
}

std::string table_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "scenario_id,family,well_formed,nc,dac,ttc,comfort,ep,pdms,ddc,tlc,lk,hc,ec,epdms,pred_meta_match\n";
  char buf[512];
  for (const ScenarioRow& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d\n",
                  row.scenario_id.c_str(), std::string(to_string(row.family)).c_str(), row.well_formed ? 1 : 0,
                  row.scores.nc, row.scores.dac, row.scores.ttc, row.scores.comfort, row.scores.ep, row.pdms,
                  row.extended.ddc, row.extended.tlc, row.extended.lk, row.extended.hc, row.extended.ec, row.epdms,
                  row.predicted_meta == row.gt_meta ? 1 : 0);
    out << buf;
  }
  return out.str();
}

}  // namespace fbgrpo::evaluate
