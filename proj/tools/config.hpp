#pragma once

#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "eigendrift/asymptotics.hpp"
#include "eigendrift/eigen.hpp"
#include "eigendrift/model.hpp"
#include "eigendrift/stream.hpp"

namespace eigendrift::cli {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bracketed sections of "key = value" lines; '#' and ';' start comments.
struct Config {
    std::map<std::string, std::map<std::string, std::string>> sections;

    bool has(const std::string& section) const { return sections.count(section) != 0; }
    std::optional<std::string> get(const std::string& section, const std::string& key) const;
};

Config parse_config(std::istream& in, const std::string& name = "<config>");
Config load_config(const std::string& path);

double parse_number(const std::string& text, const std::string& what);
std::vector<double> parse_number_list(const std::string& text, const std::string& what);

ProblemSpec problem_from_config(const Config& c);
StreamSpec stream_from_config(const Config& c);
GridPolicy policy_from_config(const Config& c);
std::optional<FormPolicy> parse_form(const std::string& s);

}  // namespace eigendrift::cli
