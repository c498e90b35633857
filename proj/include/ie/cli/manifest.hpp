#pragma once

// Run manifests. A manifest is written after every other output of a run,
// so its presence marks a finished run. Directory outputs hold manifest.json;
// a single-file output gets a "<file>.manifest.json" sidecar.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "ie/core/checksum.hpp"
#include "ie/core/types.hpp"
#include "ie/version.hpp"

namespace ie {

inline constexpr const char* kManifestName = "manifest.json";

struct RunManifest {
    std::string subcommand;
    Json config = Json::object();  // fully resolved; identical configs give identical outputs
    std::string tool_version = kVersion;
    Json seeds = Json::object();
    std::map<std::string, std::string> inputs;  // path -> FNV-1a checksum
    std::map<std::string, std::string> outputs; // path relative to the output -> checksum
    Json runtime = Json::object();              // result-invariant settings (workers, scratch)
    std::string started_at;
    double wall_clock_seconds = 0.0;

    // Everything except timing and runtime settings.
    bool same_run(const RunManifest& o) const {
        return subcommand == o.subcommand && config == o.config && tool_version == o.tool_version &&
               seeds == o.seeds && inputs == o.inputs;
    }
};

inline void to_json(Json& j, const RunManifest& m) {
    j = Json{{"subcommand", m.subcommand}, {"config", m.config},   {"tool_version", m.tool_version},
             {"seeds", m.seeds},           {"inputs", m.inputs},   {"outputs", m.outputs},
             {"runtime", m.runtime},       {"started_at", m.started_at},
             {"wall_clock_seconds", m.wall_clock_seconds}};
}

inline void from_json(const Json& j, RunManifest& m) {
    m.subcommand = j.at("subcommand").get<std::string>();
    m.config = j.at("config");
    m.tool_version = j.at("tool_version").get<std::string>();
    m.seeds = j.at("seeds");
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.runtime = j.value("runtime", Json::object());
    m.started_at = j.value("started_at", "");
    m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
}

// Tracks the wall clock from construction to write().
class ManifestWriter {
public:
    explicit ManifestWriter(std::string subcommand) : start_(std::chrono::steady_clock::now()) {
        manifest_.subcommand = std::move(subcommand);
        const std::time_t now = std::time(nullptr);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        manifest_.started_at = buf;
    }

    RunManifest& manifest() { return manifest_; }

    void input(const std::filesystem::path& p) { manifest_.inputs[p.string()] = file_checksum(p); }

    // Checksums every file under `dir` (recursively, sorted), or `dir` itself
    // when it is a file, then writes the manifest. Returns its path.
    std::filesystem::path write(const std::filesystem::path& out) {
        namespace fs = std::filesystem;
        fs::path target;
        if (fs::is_directory(out)) {
            for (const auto& e : fs::recursive_directory_iterator(out)) {
                if (!e.is_regular_file()) continue;
                const auto rel = fs::relative(e.path(), out).generic_string();
                if (rel == kManifestName || e.path().extension() == ".partial") continue;
                manifest_.outputs[rel] = file_checksum(e.path());
            }
            target = out / kManifestName;
        } else {
            manifest_.outputs[out.filename().string()] = file_checksum(out);
            target = out.string() + ".manifest.json";
        }
        manifest_.wall_clock_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        const auto tmp = target.string() + ".partial";
        {
            std::ofstream f(tmp);
            if (!f) throw IoError("cannot write " + tmp);
            f << Json(manifest_).dump(2) << '\n';
            if (!f) throw IoError("write failed for " + tmp);
        }
        fs::rename(tmp, target);
        return target;
    }

private:
    RunManifest manifest_;
    std::chrono::steady_clock::time_point start_;
};

} // namespace ie
