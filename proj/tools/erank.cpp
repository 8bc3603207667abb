#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "erank/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"erank: fielded entity retrieval with entity-based reranking"};
    app.require_subcommand(1, 1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    for (const auto& name : erank::Pipeline::subcommands()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "experiment config (JSON)")->required();
        sub->add_option("--seed", seed, "master seed override");
        sub->add_option("--threads", threads, "worker threads (0 = hardware)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        const auto& sub = app.get_subcommands().front()->get_name();
        auto cfg = erank::load_config(config_path, {seed, threads});
        erank::Pipeline pipeline(std::move(cfg), std::cout);
        pipeline.run(sub);
        return 0;
    } catch (const erank::Error& e) {
        std::cerr << "erank: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "erank: " << e.what() << '\n';
        return 2;
    }
}
