#pragma once

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace clqg {

using Json = nlohmann::ordered_json;

/// One estimator result: {name, inputs, estimate, se, target, verdict}.
struct Record {
    std::string name;
    Json inputs = Json::object();
    Json estimate;
    Json se;
    Json target;
    std::string verdict = "INFO";  ///< PASS, FAIL or INFO
    Json detail = Json::object();  ///< optional per-scale tables etc.
};

Json to_json(const Record& r);
Record record_from_json(const Json& j);

/// One compact JSON object per line.
void write_jsonl(std::ostream& os, const std::vector<Record>& records);
std::vector<Record> read_jsonl(std::istream& is);

/// Reads the estimator records from every *.jsonl file of a directory (sorted
/// by name), skipping other lines; a missing or empty directory yields none.
std::vector<Record> collect_records(const std::filesystem::path& dir);

/// Fixed-width text table: name, estimate, se, target, verdict.
std::string verdict_table(const std::vector<Record>& records);

/// Serialization of doubles used by every writer: shortest round-trip form.
std::string format_double(double v);

}  // namespace clqg
