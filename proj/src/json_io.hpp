#pragma once

// JSON (de)serialization of configuration structs. Internal to the library.

#include <set>
#include <string>

#include "json.hpp"

#include "sgmt/data.hpp"
#include "sgmt/error.hpp"
#include "sgmt/inference.hpp"
#include "sgmt/model.hpp"
#include "sgmt/sampler.hpp"
#include "sgmt/training.hpp"

namespace sgmt::json_io {

using Json = nlohmann::ordered_json;

/// Reads an object while tracking which keys were consumed; finish() rejects the rest.
class Section {
public:
    Section(const nlohmann::json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw config_error("config: " + label() + " must be an object");
    }

    bool has(const char* key) const { return node_.contains(key); }

    template <class T>
    bool get(const char* key, T& out) {
        if (!node_.contains(key)) return false;
        seen_.insert(key);
        try {
            out = node_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw config_error("config: wrong type for " + child(key));
        }
        return true;
    }

    const nlohmann::json* object(const char* key) {
        if (!node_.contains(key)) return nullptr;
        seen_.insert(key);
        return &node_.at(key);
    }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& item : node_.items()) {
            if (!seen_.count(item.key())) throw config_error("config: unknown key " + child(item.key()));
        }
    }

private:
    std::string label() const { return path_.empty() ? "root" : path_; }

    const nlohmann::json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

Json to_json(const ModelConfig& cfg);
Json to_json(const TrainConfig& cfg);
Json to_json(const SamplerConfig& cfg);
Json to_json(const VoteConfig& cfg);

void read(Section& s, ModelConfig& cfg);
void read(Section& s, TrainConfig& cfg);
void read(Section& s, SamplerConfig& cfg);
void read(Section& s, VoteConfig& cfg);
void read(Section& s, SyntheticSpec& spec);

} // namespace sgmt::json_io
