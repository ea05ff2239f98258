//! The five prompt templates used by the pipeline stages.
//!
//! Template text is fixed; rendering substitutes `{placeholder}` tokens and
//! fails if any placeholder is unbound. Substitution is a single pass over
//! pre-parsed segments, so binding values are inserted verbatim and can never
//! leave or create residual `{...}` markers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use super::{LlmError, Message, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TemplateName {
    Segment,
    Decontext,
    Edit,
    Rerank,
    Entail,
}

impl TemplateName {
    pub const ALL: [TemplateName; 5] = [
        TemplateName::Segment,
        TemplateName::Decontext,
        TemplateName::Edit,
        TemplateName::Rerank,
        TemplateName::Entail,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateName::Segment => "SEGMENT",
            TemplateName::Decontext => "DECONTEXT",
            TemplateName::Edit => "EDIT",
            TemplateName::Rerank => "RERANK",
            TemplateName::Entail => "ENTAIL",
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const SEGMENT_SYSTEM: &str = r#"This is SplitLLM, an intelligent assistant that can split sentences based on their semantic and syntactic structure within the sentence. The following are the sentences you need to split, indicated by number identifier []. I can split them based on their logical units, such as clauses, phrases, or specific grammatical boundaries. Please ensure that each unit retains its original meaning and context for better readability and understanding.
[0] {sen}
Provide the split sentences with each unit separated by a newline.
Example:
Original: The Natural is a book about Roy Hobbs a natural southpaw boxer who goes on to win the heavyweight title from Boom Boom Mancini.
Split: The Natural is a book | about Roy Hobbs | a natural southpaw boxer | who goes on to win the heavyweight | title from Boom Boom Mancini."#;

const SEGMENT_USER: &str =
    "Now, proceed with the sentence: {sen} The split result of the sentence (only split) is:";

const DECONTEXT_SYSTEM: &str = r#"Based on the seperated sentence, if the section misses its subject, complete each split section with proper subject, then form a normal senrence containing enough details. If the the section is a complete sentence, remain the syntax. Here is an example for this split job:
<user> Given sentence: The film High Noon subverts gender norms of the time | by having the woman | rescue the man.
<response> The film High Noon subverts gender norms of the time. | High Noon unfolds by having the woman character. | The woman rescue the man in High Noon."#;

const DECONTEXT_USER: &str = "Given Sentence: {sen}";

const EDIT_USER: &str = r#"You should complete the sentence <{query}> with missing name (author, writer, owner, builder, award-winning titles etc.), number (date, year, population, acreage, etc), location and so on, replace the original adversarial point of view with detailed data or evidence (for example, the biggest population -> population 3,854,000; the date is unknown -> possible dates ranging from 1598 to 1608 ) and correct the counterfactual mistakes in sentence, which is done in order to avoid adversarial cases. You should never add too much new additional information to the sentence. Here is an example:
Given sentence:
<The album was released in 2018.>
Expected result:
The "Blackpink in Your Area" compilation album was released in 2018.
To help you better complete the required task, we provide following knowledge as contexts: <{kn}>
Now do the required task on the sentence: <{query}> based on the given knowledge."#;

const RERANK_USER: &str = r#"This is RankLLM, an intelligent assistant that can rank passages based on their relevance to the query.
The following are {num_passages} passages, each indicated by number identifier []. I can rank them based on their relevance to query: {query}
{passages}
The search query is: {query}
I will rank the {top_k} passages above based on their relevance to the search query. The passages will be listed in descending order using identifiers, and the most relevant passages should be listed first, and the output format should be [] > [] > etc, e.g., [1] > [2] > [] etc.
The ranking results of the {top_k} passages (only identifiers) is:"#;

const ENTAIL_SYSTEM: &str = r#"You are a well-informed and expert fact-checker. Here are some example of how to act as a professional fact-checker:
Claim Example 1: The Cantos is a poem with most of it written over a 40 plus year time span.
Evidences for claim example 1:
<Most of it was written between 1915 and 1962, although much of the early work was abandoned and the early cantos, as finally published, date from 1922 onwards.
The Cantos by Ezra Pound is a long, incomplete poem in 116 sections, each of which is a canto.
This thread then runs through the appearance of Kuanon, the Buddhist goddess of mercy, the moon spirit from Hagaromo (a Noh play translated by Pound some 40 years earlier), Sigismondo's lover Ixotta (linked in the text with Aphrodite via a reference to the goddess' birthplace Cythera), a girl painted by Manet and finally Aphrodite herself, rising from the sea on her shell and rescuing Pound/Odysseus from his raft.>
Step 1: the evidence indicates that The Cantos is a poem with most of it written over a 40 plus year time span. Step 2: the evidence also mentions that The Cantos by Ezra Pound is a long, incomplete poem in 116 sections. Step 3: the other pieces of evidence provided This thread then runs through the appearance of Kuanon, the Buddhist goddess of mercy, the moon spirit from Hagaromo (a Noh play translated by Pound some 40 years earlier).based on the evidence provided, the claim that The Cantos is a poem with most of it written over a 40 plus year time span is supported.
final rating: supported
Claim Example 2:
......"#;

const ENTAIL_USER: &str = r#"Now its' your turn, you are provided with evidences regarding the following claim: {claim}
Evidences:
<{evidence}>
Based strictly on the main claim, and the evidences provided, you will provide:
rating: The rating for claim should be one of "supported" if and only if the Evidences specifically support the claim, "refuted" if and only if the Evidences specifically refutes the claim or "not enough information": if there is not enough information to support or refute the claim appropriately.
Is the claim: {claim} "supported", "refuted" or "not enough information" according to the available questions and answers?
Lets think step by step."#;

/// One chat prompt: an optional system message plus a user message, each with
/// `{placeholder}` slots.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub name: TemplateName,
    system: Option<Vec<Part>>,
    user: Vec<Part>,
    placeholders: BTreeSet<String>,
}

#[derive(Debug, Clone)]
enum Part {
    Text(String),
    Placeholder(String),
}

fn parse_parts(text: &str) -> Vec<Part> {
    let mut parts = Vec::new();
    let mut rest = text;
    let mut literal = String::new();
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        if let Some(close) = after.find('}') {
            let name = &after[..close];
            let valid = !name.is_empty()
                && name
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
            if valid {
                literal.push_str(&rest[..open]);
                if !literal.is_empty() {
                    parts.push(Part::Text(std::mem::take(&mut literal)));
                }
                parts.push(Part::Placeholder(name.to_string()));
                rest = &after[close + 1..];
                continue;
            }
        }
        // Not a placeholder: keep the brace as literal text.
        literal.push_str(&rest[..=open]);
        rest = &rest[open + 1..];
    }
    literal.push_str(rest);
    if !literal.is_empty() {
        parts.push(Part::Text(literal));
    }
    parts
}

fn placeholder_names(parts: &[Part]) -> impl Iterator<Item = &String> {
    parts.iter().filter_map(|p| match p {
        Part::Placeholder(name) => Some(name),
        Part::Text(_) => None,
    })
}

impl PromptTemplate {
    fn new(name: TemplateName, system: Option<&str>, user: &str) -> Self {
        let system = system.map(parse_parts);
        let user = parse_parts(user);
        let mut placeholders = BTreeSet::new();
        if let Some(parts) = &system {
            placeholders.extend(placeholder_names(parts).cloned());
        }
        placeholders.extend(placeholder_names(&user).cloned());
        PromptTemplate {
            name,
            system,
            user,
            placeholders,
        }
    }

    /// Placeholder names this template requires.
    pub fn placeholders(&self) -> &BTreeSet<String> {
        &self.placeholders
    }

    /// Substitute bindings into the template. Every placeholder must be
    /// bound; binding values pass through verbatim.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<Vec<Message>, LlmError> {
        for name in &self.placeholders {
            if !bindings.contains_key(name) {
                return Err(LlmError::MissingBinding(name.clone()));
            }
        }
        let fill = |parts: &[Part]| -> String {
            parts
                .iter()
                .map(|p| match p {
                    Part::Text(t) => t.as_str(),
                    Part::Placeholder(name) => bindings[name].as_str(),
                })
                .collect()
        };
        let mut messages = Vec::with_capacity(2);
        if let Some(parts) = &self.system {
            messages.push(Message {
                role: Role::System,
                content: fill(parts),
            });
        }
        messages.push(Message {
            role: Role::User,
            content: fill(&self.user),
        });
        Ok(messages)
    }
}

static REGISTRY: LazyLock<BTreeMap<TemplateName, PromptTemplate>> = LazyLock::new(|| {
    let mut map = BTreeMap::new();
    for (name, system, user) in [
        (TemplateName::Segment, Some(SEGMENT_SYSTEM), SEGMENT_USER),
        (TemplateName::Decontext, Some(DECONTEXT_SYSTEM), DECONTEXT_USER),
        (TemplateName::Edit, None, EDIT_USER),
        (TemplateName::Rerank, None, RERANK_USER),
        (TemplateName::Entail, Some(ENTAIL_SYSTEM), ENTAIL_USER),
    ] {
        map.insert(name, PromptTemplate::new(name, system, user));
    }
    map
});

/// The registered template for a stage.
pub fn template(name: TemplateName) -> &'static PromptTemplate {
    &REGISTRY[&name]
}
