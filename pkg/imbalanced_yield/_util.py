from __future__ import annotations
from typing import Any, Optional

import builtins

import numpy as np

class ImbalancedYieldError(ValueError):
	'''
	Base class for the domain errors raised by :mod:`imbalanced_yield`
	'''

class LabelRangeError(ImbalancedYieldError):
	'''
	A label falls outside the label space
	'''

class DimensionError(ImbalancedYieldError):
	'''
	A feature vector does not have the expected length
	'''

class CsvFormatError(ImbalancedYieldError):
	'''
	A dataset file could not be parsed

	``line`` is the 1-based line number in the file, the header being line 1.
	'''

	def __init__(self, line:int, message:str):
		super().__init__('line {}: {}'.format(line, message))
		self.line = line

	def __reduce__(self):
		return type(self), (self.line, str(self).split(': ', 1)[1])

class DivergenceError(ImbalancedYieldError):
	'''
	Training produced a non-finite loss
	'''

	def __init__(self, epoch:int, loss:float):
		super().__init__('non-finite training loss {} at epoch {}'.format(loss, epoch))
		self.epoch = epoch
		self.loss = loss

	def __reduce__(self):
		return type(self), (self.epoch, self.loss)

class ExperimentError(ImbalancedYieldError):
	'''
	An experiment step failed; wraps the underlying error with its context
	'''

	def __init__(self, scheme:Optional[str], repetition:int, message:str):
		super().__init__('scheme={} repetition={}: {}'.format(scheme, repetition, message))
		self.scheme = scheme
		self.repetition = repetition
		self.detail = message

	def __reduce__(self):
		return type(self), (self.scheme, self.repetition, self.detail)

def frozen(values:Any, dtype:Any=np.float64) -> np.ndarray:
	r'''
	Copy ``values`` into a read-only array

	>>> xs = frozen([1, 2, 3])
	>>> xs
	array([1., 2., 3.])
	>>> xs[0] = 5
	Traceback (most recent call last):
	...
	ValueError: assignment destination is read-only
	'''
	array = np.array(values, dtype=dtype)
	array.setflags(write=False)
	return array

def check_finite(name:str, values:np.ndarray) -> np.ndarray:
	r'''
	Reject arrays containing NaN or infinity

	>>> check_finite('losses', np.array([1.0, float('nan')]))
	Traceback (most recent call last):
	...
	ValueError: losses contains non-finite values
	'''
	if not np.all(np.isfinite(values)):
		raise ValueError('{} contains non-finite values'.format(name))
	return values

def check_same_length(**arrays:Any) -> int:
	r'''
	Return the common length of the named arrays

	:raises ValueError: if the lengths differ

	>>> check_same_length(preds=[1, 2], labels=[3, 4])
	2
	>>> check_same_length(preds=[1, 2], labels=[3])
	Traceback (most recent call last):
	...
	ValueError: length mismatch: preds=2, labels=1
	'''
	lengths = {name: len(values) for name, values in arrays.items()}
	if len(set(lengths.values())) > 1:
		raise ValueError('length mismatch: ' + ', '.join(
			'{}={}'.format(name, length) for name, length in lengths.items()))
	return next(iter(lengths.values()))

def check_index(length:int, index:int) -> int:
	idx = index
	if idx < 0:
		idx += length
	if not (0 <= idx < length):
		raise IndexError('index out of range: ' + str(index))
	return idx

sphinx_build: bool = getattr(builtins, '__sphinx_build__', False)
