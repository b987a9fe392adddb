#include "cmo/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    using namespace cmo::cli;
    CLI::App app{"Coupled manifold optimization: synth, fit, predict, cv, sweep"};

    std::string command;
    std::string config_path;
    app.add_option("command", command, "synth | fit | predict | cv | sweep")
        ->required()
        ->check(CLI::IsMember(commands()));
    app.add_option("--config", config_path, "JSON config file with RunConfig keys")
        ->check(CLI::ExistingFile);

    // every config key doubles as an override flag, --seed and --threads included
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& key : config_keys()) {
        auto* opt = app.add_option_function<std::string>(
            "--" + key, [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); },
            "config key " + key);
        if (key != "seed" && key != "threads" && key != "cohort" && key != "out" && key != "model")
            opt->group("Config overrides");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    return run_cli(command, config_path, overrides, std::cout, std::cerr);
}
