#include "dat/prompt_template.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "dat/errors.hpp"

namespace dat {

namespace {

const char* kSourceGenerationBody =
    "You are preparing material for {source_lang} to {target_lang} translation practice.\n"
    "Write {m} {source_lang} sentences that could serve as translation examples for the "
    "sentence given below. Each sentence should stay close to the given sentence in topic "
    "and wording, and the sentences should clearly differ from one another.\n"
    "Return them as a numbered list, one sentence per line, with no other commentary.\n"
    "\n"
    "Sentence: {query}";

const char* kTargetTranslationBody =
    "Translate the following {source_lang} sentence into {target_lang}. "
    "Reply with the {target_lang} translation only.\n"
    "\n"
    "{demonstrations}{source_lang}: {source}\n"
    "{target_lang}:";

const char* kQueryTranslationBody =
    "Translate the following {source_lang} sentence into {target_lang}. "
    "Reply with the {target_lang} translation only.\n"
    "\n"
    "{demonstrations}{source_lang}: {query}\n"
    "{target_lang}:";

const std::vector<std::string>& required_placeholders(TemplateRole role) {
    static const std::vector<std::string> source_gen{"{query}", "{m}", "{source_lang}"};
    static const std::vector<std::string> target_tr{"{source}", "{source_lang}", "{target_lang}",
                                                    "{demonstrations}"};
    static const std::vector<std::string> query_tr{"{query}", "{source_lang}", "{target_lang}",
                                                   "{demonstrations}"};
    switch (role) {
        case TemplateRole::source_generation: return source_gen;
        case TemplateRole::target_translation: return target_tr;
        case TemplateRole::query_translation: return query_tr;
    }
    return query_tr;
}

void validate_placeholders(TemplateRole role, const PromptTemplate& tmpl) {
    for (const auto& ph : required_placeholders(role)) {
        if (tmpl.body.find(ph) == std::string::npos) {
            throw ConfigError("template '" + tmpl.name + "' is missing required placeholder " +
                              ph);
        }
    }
}

}  // namespace

const char* role_name(TemplateRole role) {
    switch (role) {
        case TemplateRole::source_generation: return "source_generation";
        case TemplateRole::target_translation: return "target_translation";
        case TemplateRole::query_translation: return "query_translation";
    }
    return "unknown";
}

std::string render_template(const PromptTemplate& tmpl,
                            const std::map<std::string, std::string>& values) {
    std::string out = tmpl.body;
    for (const auto& [key, value] : values) {
        const std::string needle = "{" + key + "}";
        std::size_t pos = 0;
        while ((pos = out.find(needle, pos)) != std::string::npos) {
            out.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return out;
}

TemplateLibrary TemplateLibrary::builtin() {
    TemplateLibrary lib;
    lib.templates_[TemplateRole::source_generation] = {"source_generation",
                                                       kSourceGenerationBody};
    lib.templates_[TemplateRole::target_translation] = {"target_translation",
                                                        kTargetTranslationBody};
    lib.templates_[TemplateRole::query_translation] = {"query_translation",
                                                       kQueryTranslationBody};
    return lib;
}

TemplateLibrary TemplateLibrary::from_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw ConfigError("template directory not found: " + dir.string());
    }
    TemplateLibrary lib = builtin();
    for (auto& [role, tmpl] : lib.templates_) {
        const auto file = dir / (std::string(role_name(role)) + ".txt");
        if (!std::filesystem::exists(file)) continue;
        std::ifstream in(file, std::ios::binary);
        if (!in) throw ConfigError("cannot read template file: " + file.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        tmpl.body = buf.str();
        // Editors end files with a newline; the prompt does not want it.
        if (!tmpl.body.empty() && tmpl.body.back() == '\n') tmpl.body.pop_back();
        validate_placeholders(role, tmpl);
    }
    return lib;
}

const PromptTemplate& TemplateLibrary::get(TemplateRole role) const {
    return templates_.at(role);
}

}  // namespace dat
