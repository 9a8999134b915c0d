#include "clqg/records.hpp"

#include "clqg/common.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace clqg {

Json to_json(const Record& r) {
    Json j;
    j["name"] = r.name;
    j["inputs"] = r.inputs;
    j["estimate"] = r.estimate;
    j["se"] = r.se;
    j["target"] = r.target;
    j["verdict"] = r.verdict;
    if (!r.detail.empty()) j["detail"] = r.detail;
    return j;
}

Record record_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("name")) throw ConfigError("record: expected an object with a name");
    Record r;
    r.name = j.at("name").get<std::string>();
    r.inputs = j.value("inputs", Json::object());
    r.estimate = j.value("estimate", Json());
    r.se = j.value("se", Json());
    r.target = j.value("target", Json());
    r.verdict = j.value("verdict", std::string("INFO"));
    r.detail = j.value("detail", Json::object());
    return r;
}

void write_jsonl(std::ostream& os, const std::vector<Record>& records) {
    for (const auto& r : records) os << to_json(r).dump() << '\n';
}

std::vector<Record> read_jsonl(std::istream& is) {
    std::vector<Record> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(record_from_json(Json::parse(line)));
        } catch (const Json::exception& e) {
            throw ConfigError("record line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::vector<Record> collect_records(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::vector<Record> out;
    if (!fs::is_directory(dir)) return out;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        std::ifstream is(f);
        std::string line;
        while (std::getline(is, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            const Json j = Json::parse(line, nullptr, false);
            if (j.is_object() && j.contains("name") && j.contains("verdict")) out.push_back(record_from_json(j));
        }
    }
    return out;
}

namespace {

std::string cell(const Json& v) {
    if (v.is_null()) return "-";
    if (v.is_number()) return format_double(v.get<double>());
    if (v.is_string()) return v.get<std::string>();
    if (v.is_array() && v.size() <= 4) {
        std::string s;
        for (const auto& e : v) s += (s.empty() ? "" : " ") + cell(e);
        return s;
    }
    return v.is_array() ? "[" + std::to_string(v.size()) + " values]" : v.dump();
}

}  // namespace

std::string verdict_table(const std::vector<Record>& records) {
    std::ostringstream os;
    os << std::left << std::setw(28) << "name" << std::setw(26) << "estimate" << std::setw(26) << "se"
       << std::setw(26) << "target" << "verdict\n";
    for (const auto& r : records)
        os << std::setw(28) << r.name << std::setw(26) << cell(r.estimate) << std::setw(26) << cell(r.se)
           << std::setw(26) << cell(r.target) << r.verdict << '\n';
    return os.str();
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace clqg
