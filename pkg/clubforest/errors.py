from typing import Optional


class ClubForestError(Exception):
    ''' Base class for all errors raised by clubforest
    '''
    exit_code = 3


class ConfigurationError(ClubForestError, ValueError):
    ''' A parameter is outside of its valid range
    '''
    exit_code = 1


class UsageError(ClubForestError, ValueError):
    ''' An API was called with arguments violating its preconditions
    '''
    exit_code = 1


class DataError(ClubForestError):
    ''' Base class for problems with input data
    '''
    exit_code = 2


class InputError(DataError):
    ''' Input is empty, unreadable, or does not conform to the expected schema
    '''


class ParseError(DataError):
    ''' A row of an input file is malformed

    Parameters:
    message (str): description of the problem
    line (int|None): 1-based physical line number of the offending row, if known
    '''
    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)
        self.line = line


class SchemaError(DataError):
    ''' The inferred schema is unusable for classification
    '''


class SplitError(DataError):
    ''' A holdout split would leave one side empty
    '''


class ContainerError(DataError):
    ''' A persisted forest container is malformed or of an unknown format
    '''
