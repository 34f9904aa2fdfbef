// advpe - adversarial PE manipulation toolkit

#include "advpe/reports.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <map>

namespace advpe {

namespace {

using json = nlohmann::ordered_json;

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Bytes to_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

}  // namespace

std::string curves_csv(const CampaignResult& result) {
    std::string out = "attack,model,iteration,detection_rate,mean_score\n";
    for (const auto& c : result.curves) {
        for (std::size_t i = 0; i < c.detection_rate.size(); ++i) {
            out += c.attack + "," + c.model + "," + std::to_string(i) + "," + num(c.detection_rate[i]) + "," +
                   num(c.mean_score[i]) + "\n";
        }
    }
    return out;
}

std::string transfer_csv(const TransferMatrix& m) {
    std::string out = "surrogate";
    for (const auto& t : m.targets) out += "," + t;
    out += "\n";
    for (std::size_t i = 0; i < m.surrogates.size(); ++i) {
        out += m.surrogates[i];
        for (std::size_t j = 0; j < m.targets.size(); ++j) {
            out += "," + num(m.detection_rate(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        }
        out += "\n";
    }
    return out;
}

std::string cells_csv(const CampaignResult& result) {
    std::string out =
        "attack,model,sample,initial_score,final_score,evaded,payload_bytes,payload_fraction,queries,over_window,"
        "equivalent,timed_out,error\n";
    for (const auto& c : result.cells) {
        std::string error = c.error;
        std::replace(error.begin(), error.end(), ',', ';');
        out += c.attack + "," + c.model + "," + c.sample + "," + num(c.initial_score) + "," + num(c.final_score) + "," +
               (c.evaded ? "1" : "0") + "," + std::to_string(c.payload_bytes) + "," + num(c.payload_fraction) + "," +
               std::to_string(c.queries) + "," + (c.over_window ? "1" : "0") + "," + (c.equivalent ? "1" : "0") + "," +
               (c.timed_out ? "1" : "0") + "," + error + "\n";
    }
    return out;
}

std::string timings_csv(const CampaignResult& result) {
    std::string out = "attack,model,sample,wall_seconds,timed_out\n";
    for (const auto& c : result.cells) {
        out += c.attack + "," + c.model + "," + c.sample + "," + num(c.wall_seconds) + "," + (c.timed_out ? "1" : "0") +
               "\n";
    }
    return out;
}

std::string summary_json(const CampaignResult& result) {
    json j;
    j["models"] = json::array();
    std::map<std::string, double> thresholds;
    for (const auto& m : result.models) {
        j["models"].push_back({{"name", m.name}, {"threshold", m.threshold}, {"baseline_detection_rate", m.baseline_dr}});
        thresholds[m.name] = m.threshold;
    }
    j["attacks"] = json::array();
    for (const auto& curve : result.curves) {
        std::size_t n = 0, evaded = 0, timed_out = 0, errors = 0, non_equivalent = 0, payload_max = 0;
        double initial = 0, final_sum = 0, payload = 0, fraction = 0, fraction_max = 0, queries = 0;
        for (const auto& c : result.cells) {
            if (c.attack != curve.attack || c.model != curve.model) continue;
            ++n;
            initial += c.initial_score;
            final_sum += c.final_score;
            evaded += c.evaded;
            timed_out += c.timed_out;
            errors += !c.error.empty();
            non_equivalent += !c.equivalent;
            payload += static_cast<double>(c.payload_bytes);
            payload_max = std::max(payload_max, c.payload_bytes);
            fraction += c.payload_fraction;
            fraction_max = std::max(fraction_max, c.payload_fraction);
            queries += static_cast<double>(c.queries);
        }
        const double dn = n ? static_cast<double>(n) : 1.0;
        j["attacks"].push_back({{"attack", curve.attack},
                                {"model", curve.model},
                                {"samples", n},
                                {"mean_initial_score", initial / dn},
                                {"mean_final_score", final_sum / dn},
                                {"baseline_detection_rate", curve.detection_rate.front()},
                                {"final_detection_rate", result.final_detection_rate(curve.attack, curve.model)},
                                {"evaded", evaded},
                                {"mean_payload_bytes", payload / dn},
                                {"max_payload_bytes", payload_max},
                                {"mean_payload_fraction", fraction / dn},
                                {"max_payload_fraction", fraction_max},
                                {"mean_queries", queries / dn},
                                {"timed_out", timed_out},
                                {"errors", errors},
                                {"non_equivalent_outputs", non_equivalent}});
    }
    j["truncation"] = {{"checked", result.truncation_checks}, {"violations", result.truncation_violations}};
    return j.dump(2) + "\n";
}

std::string result_to_json(const CampaignResult& result) {
    json j;
    j["models"] = json::array();
    for (const auto& m : result.models) {
        j["models"].push_back({{"name", m.name}, {"threshold", m.threshold}, {"baseline_dr", m.baseline_dr}});
    }
    j["cells"] = json::array();
    for (const auto& c : result.cells) {
        j["cells"].push_back({{"attack", c.attack},
                              {"model", c.model},
                              {"sample", c.sample},
                              {"initial_score", c.initial_score},
                              {"final_score", c.final_score},
                              {"evaded", c.evaded},
                              {"payload_bytes", c.payload_bytes},
                              {"payload_fraction", c.payload_fraction},
                              {"queries", c.queries},
                              {"over_window", c.over_window},
                              {"equivalent", c.equivalent},
                              {"timed_out", c.timed_out},
                              {"error", c.error},
                              {"scores", c.scores}});
    }
    j["curves"] = json::array();
    for (const auto& c : result.curves) {
        j["curves"].push_back({{"attack", c.attack},
                               {"model", c.model},
                               {"detection_rate", c.detection_rate},
                               {"mean_score", c.mean_score}});
    }
    j["transfer"] = json::array();
    for (const auto& t : result.transfer) {
        json rows = json::array();
        for (Eigen::Index i = 0; i < t.detection_rate.rows(); ++i) {
            std::vector<double> row(t.detection_rate.row(i).begin(), t.detection_rate.row(i).end());
            rows.push_back(row);
        }
        j["transfer"].push_back(
            {{"attack", t.attack}, {"surrogates", t.surrogates}, {"targets", t.targets}, {"detection_rate", rows}});
    }
    j["truncation"] = {{"checked", result.truncation_checks}, {"violations", result.truncation_violations}};
    return j.dump(1) + "\n";
}

CampaignResult result_from_json(std::string_view text) {
    try {
        const auto j = json::parse(text);
        CampaignResult r;
        for (const auto& m : j.at("models")) {
            r.models.push_back({m.at("name"), m.at("threshold"), m.at("baseline_dr")});
        }
        for (const auto& c : j.at("cells")) {
            CellResult cell;
            cell.attack = c.at("attack");
            cell.model = c.at("model");
            cell.sample = c.at("sample");
            cell.initial_score = c.at("initial_score");
            cell.final_score = c.at("final_score");
            cell.evaded = c.at("evaded");
            cell.payload_bytes = c.at("payload_bytes");
            cell.payload_fraction = c.at("payload_fraction");
            cell.queries = c.at("queries");
            cell.over_window = c.at("over_window");
            cell.equivalent = c.at("equivalent");
            cell.timed_out = c.at("timed_out");
            cell.error = c.at("error");
            cell.scores = c.at("scores").get<std::vector<double>>();
            r.cells.push_back(std::move(cell));
        }
        for (const auto& c : j.at("curves")) {
            r.curves.push_back({c.at("attack"), c.at("model"), c.at("detection_rate").get<std::vector<double>>(),
                                c.at("mean_score").get<std::vector<double>>()});
        }
        for (const auto& t : j.at("transfer")) {
            TransferMatrix m;
            m.attack = t.at("attack");
            m.surrogates = t.at("surrogates").get<std::vector<std::string>>();
            m.targets = t.at("targets").get<std::vector<std::string>>();
            const auto& rows = t.at("detection_rate");
            m.detection_rate.resize(static_cast<Eigen::Index>(m.surrogates.size()),
                                    static_cast<Eigen::Index>(m.targets.size()));
            for (std::size_t i = 0; i < m.surrogates.size(); ++i) {
                for (std::size_t k = 0; k < m.targets.size(); ++k) {
                    m.detection_rate(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                        rows.at(i).at(k).get<double>();
                }
            }
            r.transfer.push_back(std::move(m));
        }
        r.truncation_checks = j.at("truncation").at("checked");
        r.truncation_violations = j.at("truncation").at("violations");
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("campaign result: ") + e.what());
    }
}

std::vector<std::string> emit_reports(const CampaignResult& result, const std::string& out_dir,
                                      bool include_timings) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw Error(ErrorCode::Io, "cannot create " + out_dir + ": " + ec.message());
    }
    std::vector<std::string> written;
    auto put = [&](const std::string& name, const std::string& text) {
        const auto path = (std::filesystem::path(out_dir) / name).string();
        write_file(path, to_bytes(text));
        written.push_back(path);
    };
    put("curves.csv", curves_csv(result));
    for (const auto& t : result.transfer) {
        put("transfer_" + t.attack + ".csv", transfer_csv(t));
    }
    put("cells.csv", cells_csv(result));
    put("summary.json", summary_json(result));
    put("result.json", result_to_json(result));
    if (include_timings) {
        put("timings.csv", timings_csv(result));
    }
    return written;
}

}  // namespace advpe
