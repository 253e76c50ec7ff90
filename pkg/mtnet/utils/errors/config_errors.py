from typing import Optional


class ConfigurationException(Exception):
    """
    Raised when a configuration value is invalid or unknown.

    Args:
        message (str):
            human readable description of the problem
        key (Optional[str]):
            dotted path of the offending configuration key, if known
    """

    def __init__(self, message="Configuration error.", key: Optional[str] = None):
        self.message = message
        self.key = key
        super().__init__(self.message if key is None else f"{key}: {self.message}")


class VocabularyMismatchError(Exception):
    """
    Raised when a checkpoint was trained on a different vocabulary than the bundle
    it is evaluated against.

    Args:
        checkpoint_hash (str):
            vocabulary hash stored in the checkpoint
        bundle_hash (str):
            vocabulary hash of the dataset bundle
    """

    def __init__(self, checkpoint_hash: str, bundle_hash: str):
        self.checkpoint_hash = checkpoint_hash
        self.bundle_hash = bundle_hash
        self.message = (
            f"vocabulary mismatch: checkpoint={checkpoint_hash} bundle={bundle_hash}"
        )
        super().__init__(self.message)
