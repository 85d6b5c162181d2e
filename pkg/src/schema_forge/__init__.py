"""Schema induction toolkit: mine intent-slot schemas from raw utterances.

The pipeline runs in stages: tag tokens with intent roles, embed the
tagged mentions, cluster mentions into concepts, mine frequent role
patterns, and serve online intent/slot inference over the result.
Every stage is deterministic given an explicit seed.
"""

from schema_forge.corpus import (
    AnnotatedUtterance,
    BioTag,
    CorpusError,
    IntentRole,
    Mention,
    Tokenizer,
    Utterance,
    decode_bio,
    encode_bio,
    parse_bio,
    parse_corpus,
    repair_tags,
)
from schema_forge.patterns import (
    PatternSet,
    RoleSet,
    extract_role_sets,
    mine_patterns,
    pattern_coverage,
)
from schema_forge.clustering import (
    ClusterAssignment,
    Concept,
    ConceptRepository,
    TransitionMatrix,
    build_knn_graph,
    kmeans_cluster,
    lpa_cluster,
    map_equation,
    mine_cluster,
    name_concepts,
)
from schema_forge.inference import (
    UNCATEGORIZED,
    ConInferConfig,
    IntentSlotResult,
    UncategorizedPool,
    canonical_intent,
    con_infer,
    expand_concepts,
    infer,
    is_infer,
)

__version__ = "0.1.0"
