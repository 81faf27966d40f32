"""Domain schemas for the synthetic graphs: node types, feature generators
and the relations between types."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..prompts import GRAPH_DESCRIPTIONS


class UnknownSchemaError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    # title | name | person | org | venue | text | sentence | year | int | price
    # | bool | choice | list | date | url | digits | case | people
    kind: str
    args: tuple = ()
    unique: bool = False


@dataclass(frozen=True)
class TypeSpec:
    name: str
    features: tuple[FeatureSpec, ...]
    size: int


@dataclass(frozen=True)
class Relation:
    """``src --edge--> dst``; the reverse list on ``dst`` is ``reverse``.

    policy ``one``: one uniform target per source.  ``fanout``: ``lo..hi``
    distinct uniform targets.  ``powerlaw``: list length drawn from a
    truncated zipf law.  Same-type relations with ``edge == reverse`` are
    stored symmetrically.
    """

    src: str
    edge: str
    dst: str
    reverse: str
    policy: str = "fanout"
    lo: int = 1
    hi: int = 3

    @property
    def symmetric(self) -> bool:
        return self.src == self.dst and self.edge == self.reverse


@dataclass(frozen=True)
class Derived:
    """Copy ``feature`` of the single ``via`` neighbor into ``node_type.feature``."""

    node_type: str
    feature: str
    via: str


@dataclass(frozen=True)
class Schema:
    name: str
    description: str
    types: tuple[TypeSpec, ...]
    relations: tuple[Relation, ...]
    derived: tuple[Derived, ...] = field(default=())

    def type_spec(self, name: str) -> TypeSpec:
        for t in self.types:
            if t.name == name:
                return t
        raise KeyError(name)


KEYWORDS = (
    "graph neural networks", "language models", "reinforcement learning", "dark matter", "protein folding",
    "gene expression", "catalysis", "thin films", "superconductivity", "clinical trials", "epidemiology",
    "optimization", "computer vision", "star formation", "quantum computing", "climate modeling",
    "machine translation", "polymers", "immunology", "signal processing", "robotics", "cosmology",
    "information retrieval", "knowledge graphs", "question answering", "semiconductors", "neuroscience",
    "crystallography", "bayesian inference", "federated learning",
)
CATEGORY_ROOTS = ("Beauty", "Electronics", "Home and Kitchen", "Sports", "Toys", "Books")
CATEGORY_LEAVES = (
    "Skin Care", "Hair Care", "Makeup", "Fragrance", "Headphones", "Cameras", "Cables", "Chargers",
    "Cookware", "Bedding", "Lighting", "Storage", "Cycling", "Running", "Camping", "Fitness", "Puzzles",
    "Board Games", "Dolls", "Building Sets", "Fiction", "Cookbooks", "Travel", "Comics",
)
GENRES = (
    "fantasy", "romance", "mystery", "thriller", "history", "biography", "science fiction", "poetry",
    "horror", "young adult", "children", "classics", "non fiction", "graphic novels", "philosophy",
    "religion", "humor", "crime", "adventure", "memoir",
)
SHELVES = (
    "to read", "currently reading", "favorites", "owned", "books i own", "library", "kindle",
    "audiobooks", "wish list", "re read", "book club", "summer reads", "default", "series", "dnf",
)
FORMATS = ("Paperback", "Hardcover", "Kindle Edition", "ebook", "Mass Market Paperback", "Audio CD")
LANGS = ("eng", "eng", "eng", "spa", "fre", "ger", "ita")
COUNTRIES = ("US", "GB", "CA", "AU", "IN")
PAPER_LANGS = ("en", "en", "en", "en", "de", "fr", "zh")


def _healthcare() -> Schema:
    sizes = {
        "Anatomy": 60, "Biological Process": 150, "Cellular Component": 60, "Compound": 200,
        "Disease": 150, "Gene": 400, "Molecular Function": 100, "Pathway": 80,
        "Pharmacologic Class": 30, "Side Effect": 150, "Symptom": 80,
    }
    types = tuple(TypeSpec(t, (FeatureSpec("name", "name", unique=True),), n) for t, n in sizes.items())
    fan = {
        "Anatomy-downregulates-Gene": (0, 4), "Anatomy-expresses-Gene": (1, 6), "Anatomy-upregulates-Gene": (0, 4),
        "Compound-binds-Gene": (0, 4), "Compound-causes-Side Effect": (1, 7), "Compound-downregulates-Gene": (0, 4),
        "Compound-palliates-Disease": (0, 3), "Compound-resembles-Compound": (0, 3), "Compound-treats-Disease": (0, 3),
        "Compound-upregulates-Gene": (0, 4), "Disease-associates-Gene": (1, 6), "Disease-downregulates-Gene": (0, 5),
        "Disease-localizes-Anatomy": (1, 3), "Disease-presents-Symptom": (1, 4), "Disease-resembles-Disease": (0, 3),
        "Disease-upregulates-Gene": (0, 5), "Gene-covaries-Gene": (0, 2), "Gene-interacts-Gene": (0, 3),
        "Gene-participates-Biological Process": (1, 4), "Gene-participates-Cellular Component": (0, 3),
        "Gene-participates-Molecular Function": (1, 3), "Gene-participates-Pathway": (0, 3),
        "Gene-regulates-Gene": (0, 2), "Pharmacologic Class-includes-Compound": (1, 12),
    }
    rels = []
    for edge, (lo, hi) in fan.items():
        src, _, rest = edge.partition("-")
        dst = rest.split("-", 1)[1]
        rels.append(Relation(src, edge, dst, edge, "fanout", lo, hi))
    return Schema("healthcare", GRAPH_DESCRIPTIONS["healthcare"], types, tuple(rels))


SCHEMAS: dict[str, Schema] = {
    "academic": Schema(
        "academic",
        GRAPH_DESCRIPTIONS["academic"],
        (
            TypeSpec(
                "paper",
                (
                    FeatureSpec("title", "title", unique=True),
                    FeatureSpec("abstract", "text", (20, 40)),
                    FeatureSpec("keywords", "list", (KEYWORDS, 2, 5)),
                    FeatureSpec("lang", "choice", (PAPER_LANGS,)),
                    FeatureSpec("year", "year", (1990, 2023)),
                ),
                1000,
            ),
            TypeSpec("author", (FeatureSpec("name", "person", unique=True), FeatureSpec("organization", "org")), 600),
            TypeSpec("venue", (FeatureSpec("name", "venue", unique=True),), 20),
        ),
        (
            Relation("paper", "author", "author", "paper", "fanout", 1, 4),
            Relation("paper", "venue", "venue", "paper", "one"),
            Relation("paper", "cited_by", "paper", "reference", "powerlaw", 1, 50),
        ),
    ),
    "ecommerce": Schema(
        "ecommerce",
        GRAPH_DESCRIPTIONS["ecommerce"],
        (
            TypeSpec(
                "item",
                (
                    FeatureSpec("title", "title", unique=True),
                    FeatureSpec("description", "text", (15, 30)),
                    FeatureSpec("price", "price", (1, 200)),
                    FeatureSpec("img", "url", ("https://img.example.com/items",)),
                    FeatureSpec("category", "category"),
                ),
                1000,
            ),
            TypeSpec("brand", (FeatureSpec("name", "org", unique=True),), 60),
        ),
        (
            Relation("item", "brand", "brand", "item", "one"),
            Relation("item", "also_viewed_item", "item", "also_viewed_item", "fanout", 1, 5),
            Relation("item", "buy_after_viewing_item", "item", "buy_after_viewing_item", "fanout", 0, 2),
            Relation("item", "also_bought_item", "item", "also_bought_item", "fanout", 1, 4),
            Relation("item", "bought_together_item", "item", "bought_together_item", "fanout", 0, 2),
        ),
    ),
    "literature": Schema(
        "literature",
        GRAPH_DESCRIPTIONS["literature"],
        (
            TypeSpec(
                "book",
                (
                    FeatureSpec("country_code", "choice", (COUNTRIES,)),
                    FeatureSpec("language_code", "choice", (LANGS,)),
                    FeatureSpec("is_ebook", "bool"),
                    FeatureSpec("title", "title", unique=True),
                    FeatureSpec("description", "text", (15, 30)),
                    FeatureSpec("format", "choice", (FORMATS,)),
                    FeatureSpec("num_pages", "int", (80, 900)),
                    FeatureSpec("publication_year", "year", (1950, 2023)),
                    FeatureSpec("url", "url", ("https://books.example.com/book",)),
                    FeatureSpec("popular_shelves", "list", (SHELVES, 2, 5)),
                    FeatureSpec("genres", "list", (GENRES, 1, 3)),
                ),
                1000,
            ),
            TypeSpec("author", (FeatureSpec("name", "person", unique=True),), 400),
            TypeSpec("publisher", (FeatureSpec("name", "org", unique=True),), 40),
            TypeSpec(
                "series",
                (FeatureSpec("title", "title", unique=True), FeatureSpec("description", "text", (10, 20))),
                150,
            ),
        ),
        (
            Relation("book", "author", "author", "book", "fanout", 1, 2),
            Relation("book", "publisher", "publisher", "book", "one"),
            Relation("book", "series", "series", "book", "fanout", 0, 1),
            Relation("book", "similar_books", "book", "similar_books", "fanout", 1, 3),
        ),
    ),
    "healthcare": _healthcare(),
    "legal": Schema(
        "legal",
        GRAPH_DESCRIPTIONS["legal"],
        (
            TypeSpec("opinion", (FeatureSpec("plain_text", "sentence", (12, 20), unique=True),), 1000),
            TypeSpec(
                "opinion cluster",
                (
                    FeatureSpec("judges", "people", (1, 3)),
                    FeatureSpec("case_name", "case"),
                    FeatureSpec("attorneys", "people", (1, 2)),
                    FeatureSpec("syllabus", "sentence", (12, 20), unique=True),
                ),
                700,
            ),
            TypeSpec("docket", (FeatureSpec("case_name", "case"), FeatureSpec("pacer_case_id", "digits", (7,), unique=True)), 500),
            TypeSpec(
                "court",
                (
                    FeatureSpec("citation_string", "abbrev", unique=True),
                    FeatureSpec("full_name", "court", unique=True),
                    FeatureSpec("start_date", "date", (1789, 1950)),
                    FeatureSpec("end_date", "date", (1951, 2023)),
                ),
                25,
            ),
        ),
        (
            Relation("opinion", "opinion_cluster", "opinion cluster", "opinion", "one"),
            Relation("opinion cluster", "docket", "docket", "opinion_cluster", "one"),
            Relation("docket", "court", "court", "docket", "one"),
            Relation("opinion", "cited_by", "opinion", "reference", "powerlaw", 1, 20),
        ),
        (Derived("opinion cluster", "case_name", "docket"),),
    ),
}


def get_schema(name: str) -> Schema:
    try:
        return SCHEMAS[name]
    except KeyError:
        raise UnknownSchemaError(f"unknown schema {name!r}; known: {', '.join(sorted(SCHEMAS))}") from None
