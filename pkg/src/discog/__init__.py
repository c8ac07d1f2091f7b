"""Graph-based predictive coding and ranking for eDiscovery review.

The pipeline builds a heterogeneous graph over an email corpus
(documents, topics, senders/recipients, keywords), trains link
predictors over document-topic relevance edges, ranks every document
per production request, validates the top of the ranking through an
LLM client, and reports the review-cost savings.
"""

__version__ = "0.1.0"
