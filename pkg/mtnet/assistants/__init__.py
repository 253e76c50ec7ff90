from .train_assistant import TrainAssistant
