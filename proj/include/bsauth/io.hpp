#pragma once

// File formats: JSON scenario documents, JSON reports and CSV power traces.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include <json.hpp>

#include "bsauth/engine.hpp"
#include "bsauth/monitor.hpp"

namespace bsauth::io {

using Json = nlohmann::ordered_json;

// Throws ParseError (line/position) or ConfigError (field path, constraint).
engine::ScenarioConfig scenario_from_json_text(std::string_view text);
engine::ScenarioConfig scenario_from_json(const Json& doc);
// Throws IoError when the file cannot be read.
engine::ScenarioConfig parse_scenario(const std::filesystem::path& path);

Json scenario_to_json(const engine::ScenarioConfig& cfg);

Json to_json(const monitor::DecodeResult& result);
Json to_json(const engine::SimReport& report);

// CSV with header "time_s,power_dbm", one sample per row, full precision.
void write_trace_csv(std::ostream& out, const monitor::PowerTrace& trace);
void write_trace_csv(const std::filesystem::path& path, const monitor::PowerTrace& trace);

// The sample rate is inferred from the time column and snapped to a whole
// number of hertz when within 1 ppm. Throws ParseError on malformed input.
monitor::PowerTrace read_trace_csv(std::istream& in);
monitor::PowerTrace read_trace_csv(const std::filesystem::path& path);

}  // namespace bsauth::io
