#include "sgmt/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>

#include "json.hpp"

#include "sgmt/error.hpp"

namespace sgmt {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        switch (err->kind()) {
        case ErrorKind::config: return 2;
        case ErrorKind::data: return 3;
        case ErrorKind::numeric: return 4;
        }
    }
    if (dynamic_cast<const fs::filesystem_error*>(&e) != nullptr) return 3;
    return 1;
}

namespace {

Vocabulary vocabulary_of(const std::vector<WSIRecord>& records) {
    std::vector<std::string> captions;
    captions.reserve(records.size());
    for (const auto& r : records) captions.push_back(r.caption);
    return build_vocabulary(captions);
}

std::vector<WSIRecord> load_required(const std::string& path, const char* what) {
    if (path.empty()) throw config_error(std::string("config: paths.") + what + " is not set");
    return load_dataset(path);
}

} // namespace

SynthSummary cmd_synth_data(const RunConfig& cfg, const fs::path& out_dir, bool force, Split split) {
    if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
        if (!force) throw data_error(out_dir.string() + " is not empty (use --force to overwrite)");
        fs::remove_all(out_dir);
    }
    SyntheticSpec spec = cfg.data;
    if (split == Split::test) spec.seed = derive_seed(spec.seed, "test");
    std::vector<WSIRecord> records = generate_synthetic(spec);
    if (split == Split::test) {
        for (auto& r : records) r.id.replace(0, r.id.find('_'), "test");
    }
    save_dataset(records, out_dir);
    return {records.size(), vocabulary_of(records).size()};
}

TrainSummary cmd_train(RunConfig cfg, const TrainOptions& options) {
    if (!options.profile.empty()) apply_profile(cfg, options.profile);
    if (options.m_limit > 0) cfg.sampler.M = options.m_limit;
    cfg.validate();
    const fs::path out = options.out.empty() ? fs::path(cfg.paths.checkpoint) : options.out;
    if (out.empty()) throw config_error("config: paths.checkpoint is not set");

    const std::vector<WSIRecord> dataset = load_required(cfg.paths.dataset, "dataset");
    const Vocabulary vocab = vocabulary_of(dataset);

    Checkpoint ck;
    if (!options.resume.empty()) {
        ck = load_checkpoint(options.resume);
        if (!(ck.vocab == vocab)) throw data_error("dataset vocabulary does not match the checkpoint");
        ck.train_cfg = cfg.train;
    } else {
        ck.model_cfg = cfg.model;
        ck.model_cfg.vocab_size = vocab.size();
        ck.model_cfg.validate();
        ck.train_cfg = cfg.train;
        ck.state = init_train_state(ck.model_cfg, ck.train_cfg);
        ck.vocab = vocab;
    }

    std::vector<WSIRecord> held_out;
    if (cfg.train.eval_every > 0 && !cfg.paths.test_dataset.empty()) held_out = load_dataset(cfg.paths.test_dataset);

    TrainHooks hooks;
    long epoch_start = ck.state.step;
    hooks.on_epoch = [&](const TrainState& state) {
        if (options.log == nullptr) return;
        double sum = 0.0;
        long count = 0;
        for (auto it = state.history.rbegin(); it != state.history.rend() && it->step > epoch_start; ++it) {
            sum += it->loss;
            ++count;
        }
        epoch_start = state.step;
        *options.log << "epoch " << state.epoch << " step " << state.step << " loss " << (count ? sum / count : 0.0);
        if (!held_out.empty() && state.epoch % cfg.train.eval_every == 0) {
            VoteConfig single = cfg.vote;
            single.k = 1;
            const auto lines = caption_records(held_out, state.params, ck.model_cfg, vocab, cfg.sampler, single);
            const auto eval = evaluate_captions(lines, held_out, ck.model_cfg.K);
            *options.log << " bleu4 " << format_decimal4(eval.metrics.bleu4) << " subtype_acc "
                         << format_decimal4(eval.subtype_accuracy);
        }
        *options.log << '\n';
    };
    train(ck.state, dataset, vocab, ck.model_cfg, ck.train_cfg, cfg.sampler, hooks);
    save_checkpoint(ck, out);

    TrainSummary summary;
    summary.checkpoint = out;
    summary.steps = ck.state.step;
    if (!ck.state.history.empty()) summary.final_loss = ck.state.history.back().loss;
    return summary;
}

std::string to_json_line(const CaptionLine& line) {
    nlohmann::ordered_json j;
    j["id"] = line.id;
    j["caption"] = line.caption;
    j["subtype_pred"] = line.subtype_pred;
    j["votes"] = line.votes;
    return j.dump();
}

std::vector<CaptionLine> read_caption_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot read " + path.string());
    std::vector<CaptionLine> out;
    std::string text;
    int number = 0;
    while (std::getline(in, text)) {
        ++number;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(text);
            CaptionLine line;
            line.id = j.at("id").get<std::string>();
            line.caption = j.at("caption").get<std::string>();
            line.subtype_pred = j.value("subtype_pred", -1);
            if (j.contains("votes")) line.votes = j.at("votes").get<std::vector<std::string>>();
            out.push_back(std::move(line));
        } catch (const nlohmann::json::exception&) {
            throw data_error(path.string() + ":" + std::to_string(number) + ": malformed caption line");
        }
    }
    return out;
}

std::vector<CaptionLine> caption_records(const std::vector<WSIRecord>& records, const ModelParams& params,
                                         const ModelConfig& model_cfg, const Vocabulary& vocab,
                                         SamplerConfig sampler_cfg, VoteConfig vote_cfg) {
    sampler_cfg.validate();
    const std::uint64_t base = vote_cfg.seed;
    std::vector<CaptionLine> out;
    out.reserve(records.size());
    for (const auto& record : records) {
        vote_cfg.seed = derive_seed(base, record.id);
        const VoteResult r = caption_with_voting(record, params, model_cfg, sampler_cfg, vote_cfg, vocab);
        CaptionLine line;
        line.id = record.id;
        line.caption = vocab.decode_caption(r.caption);
        line.subtype_pred = r.subtype;
        for (const auto& m : r.members) line.votes.push_back(vocab.decode_caption(m.caption));
        out.push_back(std::move(line));
    }
    return out;
}

std::vector<CaptionLine> cmd_caption(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& dataset,
                                     const CaptionOptions& options) {
    if (options.infer_limit <= 0) throw config_error("--infer-limit must be positive");
    const Checkpoint ck = load_checkpoint(checkpoint);
    const std::vector<WSIRecord> records = load_dataset(dataset);
    SamplerConfig sampler = cfg.sampler;
    sampler.infer_limit = options.infer_limit;
    VoteConfig vote = cfg.vote;
    if (options.vote > 0) vote.k = options.vote;
    if (options.patch_noise >= 0.0) vote.patch_noise = options.patch_noise;
    vote.validate();
    return caption_records(records, ck.state.params, ck.model_cfg, ck.vocab, sampler, vote);
}

EvalSummary evaluate_captions(const std::vector<CaptionLine>& candidates, const std::vector<WSIRecord>& records,
                              int K, const MetricOptions& options) {
    std::map<std::string, const CaptionLine*> by_id;
    for (const auto& c : candidates) {
        if (!by_id.emplace(c.id, &c).second) throw data_error("duplicate candidate id '" + c.id + "'");
    }
    if (by_id.size() != records.size()) throw data_error("candidate ids do not cover the dataset");

    EvalSummary summary;
    summary.per_subtype_accuracy.assign(static_cast<std::size_t>(K), 0.0);
    summary.per_subtype_count.assign(static_cast<std::size_t>(K), 0);
    EvalCorpus corpus;
    int correct = 0;
    int exact = 0;
    for (const auto& record : records) {
        const auto it = by_id.find(record.id);
        if (it == by_id.end()) throw data_error("no candidate for id '" + record.id + "'");
        if (record.subtype < 0 || record.subtype >= K)
            throw data_error("record " + record.id + " has a subtype outside [0, K)");
        EvalItem item;
        item.id = record.id;
        item.candidate = tokenize(it->second->caption);
        item.references.push_back(tokenize(record.caption));
        exact += item.candidate == item.references.front();
        const auto s = static_cast<std::size_t>(record.subtype);
        ++summary.per_subtype_count[s];
        if (it->second->subtype_pred == record.subtype) {
            ++correct;
            summary.per_subtype_accuracy[s] += 1.0;
        }
        corpus.items.push_back(std::move(item));
    }
    summary.metrics = evaluate(corpus, options);
    summary.items = records.size();
    summary.subtype_accuracy = static_cast<double>(correct) / static_cast<double>(records.size());
    summary.exact_match = static_cast<double>(exact) / static_cast<double>(records.size());
    for (std::size_t k = 0; k < summary.per_subtype_accuracy.size(); ++k) {
        if (summary.per_subtype_count[k] > 0) summary.per_subtype_accuracy[k] /= summary.per_subtype_count[k];
    }
    return summary;
}

std::string format_eval(const EvalSummary& summary) {
    std::string out = format_report(summary.metrics);
    out.pop_back();
    out += ", \"subtype_accuracy\": " + format_decimal4(summary.subtype_accuracy);
    out += ", \"exact_match\": " + format_decimal4(summary.exact_match);
    out += ", \"per_subtype\": [";
    for (std::size_t k = 0; k < summary.per_subtype_accuracy.size(); ++k) {
        if (k) out += ", ";
        out += "{\"subtype\": " + std::to_string(k) + ", \"count\": " + std::to_string(summary.per_subtype_count[k]) +
               ", \"accuracy\": " + format_decimal4(summary.per_subtype_accuracy[k]) + "}";
    }
    out += "], \"items\": " + std::to_string(summary.items) + "}";
    return out;
}

EvalSummary cmd_eval(const fs::path& candidates, const fs::path& dataset, int K, const MetricOptions& options) {
    const std::vector<WSIRecord> records = load_dataset(dataset);
    if (K <= 0) {
        for (const auto& r : records) K = std::max(K, r.subtype + 1);
    }
    return evaluate_captions(read_caption_lines(candidates), records, K, options);
}

MetricReport cmd_metrics(const fs::path& candidates, const fs::path& references, const MetricOptions& options) {
    return evaluate(load_corpus(candidates, references), options);
}

std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, const std::vector<int>& train_limits,
                                const std::vector<int>& infer_limits, const SweepOptions& options) {
    if (train_limits.empty() || infer_limits.empty()) throw config_error("sweep needs at least one limit of each kind");
    for (const int v : train_limits) {
        if (v <= 0) throw config_error("train limits must be positive");
    }
    for (const int v : infer_limits) {
        if (v <= 0) throw config_error("infer limits must be positive");
    }
    cfg.validate();
    const std::vector<WSIRecord> dataset = load_required(cfg.paths.dataset, "dataset");
    const std::vector<WSIRecord> held_out = load_required(cfg.paths.test_dataset, "test_dataset");
    const Vocabulary vocab = vocabulary_of(dataset);
    ModelConfig model_cfg = cfg.model;
    model_cfg.vocab_size = vocab.size();

    std::vector<SweepRow> rows;
    for (const int train_limit : train_limits) {
        SamplerConfig sampler = cfg.sampler;
        sampler.M = train_limit;
        TrainState state = init_train_state(model_cfg, cfg.train);
        train(state, dataset, vocab, model_cfg, cfg.train, sampler);
        for (const int infer_limit : infer_limits) {
            sampler.infer_limit = infer_limit;
            VoteConfig vote = cfg.vote;
            vote.k = options.vote;
            const auto lines = caption_records(held_out, state.params, model_cfg, vocab, sampler, vote);
            SweepRow row{train_limit, infer_limit, evaluate_captions(lines, held_out, model_cfg.K).metrics};
            if (options.log != nullptr) {
                *options.log << "train_limit " << train_limit << " infer_limit " << infer_limit << " bleu4 "
                             << format_decimal4(row.metrics.bleu4) << '\n';
            }
            rows.push_back(row);
        }
    }
    return rows;
}

std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "train_limit,infer_limit,bleu4,cider,rougeL,meteor\n";
    for (const auto& r : rows) {
        out += std::to_string(r.train_limit) + "," + std::to_string(r.infer_limit) + "," +
               format_decimal4(r.metrics.bleu4) + "," + format_decimal4(r.metrics.cider) + "," +
               format_decimal4(r.metrics.rougeL) + "," + format_decimal4(r.metrics.meteor) + "\n";
    }
    return out;
}

} // namespace sgmt
