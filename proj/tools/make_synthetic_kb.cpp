#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "erank/error.hpp"
#include "erank/io.hpp"
#include "erank/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Writes a clustered synthetic KB (triples, mapping, queries, qrels)"};
    std::string out_dir;
    erank::SyntheticSpec spec;
    app.add_option("--out", out_dir, "output directory")->required();
    app.add_option("--clusters", spec.clusters);
    app.add_option("--cluster-size", spec.cluster_size);
    app.add_option("--foreign-topics", spec.foreign_topics);
    app.add_option("--noise-edges", spec.noise_edges);
    app.add_option("--seed", spec.seed);
    CLI11_PARSE(app, argc, argv);

    try {
        const auto kb = erank::make_synthetic_kb(spec);
        const std::filesystem::path dir(out_dir);
        std::ostringstream triples, queries, qrels;
        erank::write_triples(triples, kb.triples);
        erank::write_queries(queries, kb.queries);
        kb.qrels.write(qrels);
        erank::io::write_file(dir / "triples.nt", triples.str());
        erank::io::write_file(dir / "mapping.tsv", kb.mapping);
        erank::io::write_file(dir / "queries.jsonl", queries.str());
        erank::io::write_file(dir / "qrels.txt", qrels.str());
        std::cout << kb.triples.size() << " triples, " << kb.queries.size() << " queries written to " << out_dir
                  << '\n';
    } catch (const erank::Error& e) {
        std::cerr << "make_synthetic_kb: " << e.what() << '\n';
        return e.exit_code();
    }
    return 0;
}
